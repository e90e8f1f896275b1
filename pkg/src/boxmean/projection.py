"""Exact Euclidean projection onto ``[0,1]^n`` intersected with a mean slice.

The feasible set is ``C(q) = {x in [0,1]^n : mean(x) = q}``.  The projection
of ``y`` onto ``C(q)`` has the water-filling form ``x = clip(y + lam, 0, 1)``
where the scalar shift ``lam`` is the root of

    g(lam) = mean(clip(y + lam, 0, 1)) - q,

a nondecreasing piecewise-linear function whose breakpoints are ``-y_i`` and
``1 - y_i``.  Sorting the ``2n`` breakpoints localises the root exactly, so
the whole solve is O(n log n) with no iteration.

The same object carries the reflection bookkeeping used by the particle
scheme: the clamp excesses ``dk_i = y_i + lam - x_i`` are the per-coordinate
boundary pushes (positive only at the upper face, negative only at the lower
face), and ``lam`` is the uniform shift shared by every coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of one constrained projection.

    Attributes
    ----------
    x : ndarray
        The projected point, ``x = clip(y + lam, 0, 1)``.
    lam : float
        Uniform shift (multiplier of the mean constraint).
    dk : ndarray
        Signed clamp excesses; ``dk_i > 0`` only where ``x_i == 1`` and
        ``dk_i < 0`` only where ``x_i == 0``.  Reconstruction
        ``x_i = y_i + lam - dk_i`` holds exactly in floating point.
    y : ndarray
        The input point (kept for cone checks).
    q : float
        Target mean.
    """

    x: np.ndarray
    lam: float
    dk: np.ndarray
    y: np.ndarray
    q: float


def project_constrained(y: np.ndarray, q: float, tol: float = 1e-12) -> ProjectionResult:
    """Project ``y`` onto ``{x in [0,1]^n : mean(x) = q}``.

    Parameters
    ----------
    y : array_like
        Point to project, any real values.
    q : float
        Target mean, must lie strictly inside (0, 1) so the constraint set
        has nonempty relative interior.
    tol : float
        Positive sanity tolerance for internal consistency checks.

    Notes
    -----
    When ``g`` has a flat plateau at the root (every coordinate clipped and
    the clipped mean equals ``q`` for an interval of shifts) the projected
    point is unique but the shift is not; the midpoint of the plateau is
    returned so the reported ``lam`` is deterministic.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a nonempty 1-d array")
    if not 0.0 < q < 1.0:
        raise ValueError(f"target mean must lie in (0, 1), got {q}")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    n = y.size

    # Feasible input: snap to the identity so projecting twice is a no-op.
    g0 = float(np.mean(np.clip(y, 0.0, 1.0))) - q
    if abs(g0) <= 2.0 * _EPS and np.all(y >= 0.0) and np.all(y <= 1.0):
        return ProjectionResult(x=y.copy(), lam=0.0, dk=np.zeros(n), y=y, q=q)

    ys = np.sort(y)
    csum = np.concatenate(([0.0], np.cumsum(ys)))

    def clipped_sum(lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sum of clip(y + lam) and the count of interior coordinates."""
        lam = np.atleast_1d(lam)
        lo = np.searchsorted(ys, -lam, side="right")          # y_i + lam <= 0
        hi = n - np.searchsorted(ys, 1.0 - lam, side="left")  # y_i + lam >= 1
        interior = n - lo - hi
        s = hi + (csum[n - hi] - csum[lo]) + lam * interior
        return s, interior

    bps = np.sort(np.concatenate((-ys, 1.0 - ys)))
    gv = clipped_sum(bps)[0] / n - q
    k = int(np.searchsorted(gv, 0.0, side="left"))
    # g equals -q < 0 below the first breakpoint and 1 - q > 0 above the
    # last one, so the root is bracketed by breakpoints on both sides.
    if k >= bps.size:
        k = bps.size - 1

    if gv[k] == 0.0:
        j = int(np.searchsorted(gv, 0.0, side="right")) - 1
        lam = 0.5 * (bps[k] + bps[j])
    else:
        g_lo, g_hi = gv[k - 1], gv[k]
        lam = bps[k - 1] + (-g_lo) * (bps[k] - bps[k - 1]) / (g_hi - g_lo)
        # One exact Newton polish on the linear piece kills the last ulp of
        # interpolation roundoff so mean(x) matches q to machine precision.
        s, interior = clipped_sum(np.array([lam]))
        resid = s[0] / n - q
        if resid != 0.0 and interior[0] > 0:
            lam -= resid * n / interior[0]

    shifted = y + lam
    x = np.clip(shifted, 0.0, 1.0)
    dk = shifted - x
    return ProjectionResult(x=x, lam=float(lam), dk=dk, y=y, q=q)


@dataclass(frozen=True)
class FaceNormal:
    """Inward normal direction attached to one box face inside the mean slice.

    For particle ``i`` at the lower face (``face = 0``) the direction is
    ``e_i - (1/n) 1`` and at the upper face (``face = 1``) it is the negative.
    These are the directions along which the constrained dynamics push a
    clamped coordinate back into the box without leaving the mean slice.
    """

    i: int
    face: int
    gamma: np.ndarray | tuple


def face_normal(i: int, face: int, n: int, exact: bool = False) -> FaceNormal:
    """Return the face direction ``(-1)^face (e_i - (1/n) 1)``.

    With ``exact=True`` the components are ``fractions.Fraction`` so identity
    checks can be carried out in rational arithmetic.
    """
    if not 0 <= i < n:
        raise ValueError(f"index out of range: i={i}, n={n}")
    if face not in (0, 1):
        raise ValueError(f"face must be 0 (lower) or 1 (upper), got {face}")
    sign = -1 if face == 1 else 1
    if exact:
        base = [Fraction(-1, n)] * n
        base[i] = Fraction(n - 1, n)
        gamma = tuple(Fraction(sign) * g for g in base)
    else:
        gamma = np.full(n, -1.0 / n)
        gamma[i] += 1.0
        gamma = sign * gamma
    return FaceNormal(i=i, face=face, gamma=gamma)


@dataclass(frozen=True)
class ConeDecomposition:
    """Nonnegative face coefficients explaining a projection residual.

    ``coeffs[i, m]`` multiplies ``face_normal(i, m, n)``; the residual of the
    input point about the projected point, with its uniform component removed,
    equals minus the weighted sum of the inward face directions.  At corner
    configurations where every coordinate is clamped the coefficients are not
    unique; ``degenerate`` flags that case instead of pretending otherwise.
    """

    coeffs: np.ndarray
    degenerate: bool
    residual: float


def decompose_as_cone(result: ProjectionResult) -> ConeDecomposition:
    """Express the projection residual in the face-direction cone.

    The clamp excesses already carry the decomposition: ``|dk_i|`` is the
    coefficient of the face that coordinate ``i`` is clamped to.  The
    reported ``residual`` is the sup-norm mismatch between the mean-free part
    of ``y - x`` and ``-sum_i coeffs[i, m] * gamma_{i, m}``; it is zero up to
    roundoff whenever the projection is correct.
    """
    dk = result.dk
    n = dk.size
    coeffs = np.zeros((n, 2))
    coeffs[:, 1] = np.where(dk > 0.0, dk, 0.0)
    coeffs[:, 0] = np.where(dk < 0.0, -dk, 0.0)

    # sum_i c_{i,m} gamma_{i,m} = -dk + mean(dk) 1, assembled directly.
    cone_vec = -dk + np.mean(dk)
    resid_vec = result.y - result.x
    resid_vec = resid_vec - np.mean(resid_vec)
    residual = float(np.max(np.abs(resid_vec + cone_vec)))

    active = (result.x == 0.0) | (result.x == 1.0)
    return ConeDecomposition(coeffs=coeffs, degenerate=bool(np.all(active)), residual=residual)
