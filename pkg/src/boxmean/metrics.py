"""Comparison metrics and verification studies.

On the line, the 2-Wasserstein distance is an L2 distance between quantile
functions, so every variant here reduces to sorting and piecewise-linear
CDF inversion: empirical vs empirical (equal sizes pair order statistics,
unequal sizes interpolate the smaller quantile function to the larger
count), empirical vs cell density, density vs density.

The studies built on top: a convergence-rate sweep over coupled particle
counts against the deterministic density oracle, a boundary-variation and
path-increment report, and a two-ensemble contraction test under shared
noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fpe import DensityGrid
from .model import ProblemSpec, one_sided_lipschitz_constant
from .particles import RunRecord
from .projection import project_constrained
from .rng import normal_increments

__all__ = [
    "w2_empirical_empirical",
    "w2_empirical_density",
    "w2_density_density",
    "RateTable",
    "rate_study",
    "BVReport",
    "bv_holder_report",
    "ContractionResult",
    "contraction_test",
]


def _check_support(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("samples must form a nonempty 1-d array")
    if a.min() < -1e-12 or a.max() > 1.0 + 1e-12:
        raise ValueError("samples must lie in [0, 1]")
    return np.sort(a)


def _density_quantiles(grid: DensityGrid, p: np.ndarray) -> np.ndarray:
    u = np.asarray(grid.u, dtype=float)
    if np.any(u < -1e-12):
        raise ValueError("density has negative cells beyond tolerance")
    mass = float(np.sum(u) / u.size)
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"density mass is {mass:.10g}, expected 1 within 1e-8")
    cdf = np.concatenate(([0.0], np.cumsum(np.maximum(u, 0.0)) / u.size))
    cdf /= cdf[-1]
    faces = np.linspace(0.0, 1.0, u.size + 1)
    return np.interp(p, cdf, faces)


def w2_empirical_empirical(a: np.ndarray, b: np.ndarray) -> float:
    """W2 between two empirical measures on [0,1].

    Equal sizes pair sorted samples directly; otherwise the smaller sample's
    piecewise-linear quantile function is evaluated at the larger sample's
    quantile midpoints.
    """
    sa, sb = _check_support(a), _check_support(b)
    if sa.size == sb.size:
        return float(np.sqrt(np.mean((sa - sb) ** 2)))
    if sa.size > sb.size:
        sa, sb = sb, sa
    p = (np.arange(sb.size) + 0.5) / sb.size
    qa = np.interp(p, (np.arange(sa.size) + 0.5) / sa.size, sa)
    return float(np.sqrt(np.mean((qa - sb) ** 2)))


def w2_empirical_density(a: np.ndarray, grid: DensityGrid) -> float:
    """W2 between an empirical measure and a cell-averaged density.

    The density quantile function is evaluated at the ``n`` empirical
    quantile midpoints, which is midpoint quadrature of the quantile-space
    integral; the discretization error is O(1/n) + O(dx).
    """
    sa = _check_support(a)
    p = (np.arange(sa.size) + 0.5) / sa.size
    return float(np.sqrt(np.mean((sa - _density_quantiles(grid, p)) ** 2)))


def w2_density_density(ga: DensityGrid, gb: DensityGrid, n_quantiles: int = 4096) -> float:
    """W2 between two cell densities via quantile quadrature."""
    p = (np.arange(n_quantiles) + 0.5) / n_quantiles
    qa = _density_quantiles(ga, p)
    qb = _density_quantiles(gb, p)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateTable:
    """Errors and fits of a coupled particle-count sweep.

    ``per_seed[i, j]`` is the sup-over-snapshots W2 for size ``n_values[i]``
    and seed ``j``.  Three regression summaries of the median error are
    reported: the slope against ``log(1/sqrt(n))``, the slope against
    ``log(1/sqrt(log n))``, and the exponent ``beta`` in ``err ~ n^-beta``
    (half the first slope).  ``log_consistency`` lists
    ``median * sqrt(log n)``, which stays bounded when the error is at worst
    ``O(1/sqrt(log n))``.
    """

    n_values: np.ndarray
    per_seed: np.ndarray
    medians: np.ndarray
    floor: float
    slope_vs_inv_sqrt_n: float
    slope_vs_inv_sqrt_log_n: float
    exponent_n: float
    strictly_decreasing: bool
    log_consistency: np.ndarray
    log_consistency_ok: bool

    def rows(self) -> list[dict]:
        out = []
        for i, n in enumerate(self.n_values):
            out.append({
                "n": int(n),
                "median_sup_w2": float(self.medians[i]),
                "err_times_sqrt_log_n": float(self.log_consistency[i]),
                **{f"seed{j}": float(v) for j, v in enumerate(self.per_seed[i])},
            })
        return out


def _slope(xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.polyfit(xs, ys, 1)[0])


def rate_study(
    records_by_n: list[tuple[int, list[RunRecord]]],
    pde_snapshots: list[DensityGrid],
    pde_floor: float = 0.0,
) -> RateTable:
    """Sup-over-time W2 against the density oracle, per size and seed.

    ``pde_floor`` is the oracle's own discretization error (estimated by
    grid refinement); it is subtracted from the medians before the
    regressions so the fits see the statistical component.
    """
    if not records_by_n:
        raise ValueError("need at least one particle count")
    n_values = np.array([n for n, _ in records_by_n], dtype=float)
    if np.any(np.diff(n_values) <= 0.0):
        raise ValueError("particle counts must be increasing")
    pde_times = np.array([g.t for g in pde_snapshots])

    per_seed = []
    for n, records in records_by_n:
        errs = []
        for rec in records:
            if rec.snapshot_times.size != pde_times.size or not np.allclose(rec.snapshot_times, pde_times, atol=1e-9):
                raise ValueError("run snapshots and density snapshots are not aligned in time")
            errs.append(max(w2_empirical_density(m, g) for m, g in zip(rec.marginals, pde_snapshots)))
        per_seed.append(errs)
    per_seed = np.asarray(per_seed, dtype=float)
    medians = np.median(per_seed, axis=1)

    adjusted = np.maximum(medians - pde_floor, 1e-12)
    log_err = np.log(adjusted)
    slope_n = _slope(np.log(1.0 / np.sqrt(n_values)), log_err)
    slope_log_n = _slope(np.log(1.0 / np.sqrt(np.log(n_values))), log_err)
    exponent = -_slope(np.log(n_values), log_err)

    consistency = medians * np.sqrt(np.log(n_values))
    consistency_ok = bool(np.all(consistency <= consistency[0] * 1.1 + 1e-12))

    return RateTable(
        n_values=n_values.astype(int),
        per_seed=per_seed,
        medians=medians,
        floor=pde_floor,
        slope_vs_inv_sqrt_n=slope_n,
        slope_vs_inv_sqrt_log_n=slope_log_n,
        exponent_n=exponent,
        strictly_decreasing=bool(np.all(np.diff(medians) < 0.0)),
        log_consistency=consistency,
        log_consistency_ok=consistency_ok,
    )


# ---------------------------------------------------------------------------
# boundary variation and path increments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BVReport:
    """Boundary local-time totals and path-increment quotients for one run.

    ``quotients[i, j]`` is the empirical fourth-moment quotient
    ``mean |X_t - X_s|^4 / |t-s|^(4 beta_i)`` over snapshot pairs at dyadic
    index gap ``gaps[j]``; it should stay bounded for the exponent the
    dynamics actually has and blow up as the gap shrinks for exponents that
    are too optimistic.
    """

    k_tv_mean: float
    k_tv_max: float
    betas: np.ndarray
    gaps: np.ndarray
    quotients: np.ndarray


def bv_holder_report(record: RunRecord, betas: tuple[float, ...] = (0.125, 0.25, 0.5)) -> BVReport:
    """Summarize reflection activity and increment regularity of a run."""
    times = record.snapshot_times
    arr = np.stack(record.positions)
    levels = []
    g = 1
    while g < times.size:
        levels.append(g)
        g *= 2
    betas_arr = np.asarray(betas, dtype=float)
    quot = np.empty((betas_arr.size, len(levels)))
    for j, gap in enumerate(levels):
        d4 = np.mean(np.abs(arr[gap:] - arr[:-gap]) ** 4, axis=1)  # per pair
        dts = times[gap:] - times[:-gap]
        for i, beta in enumerate(betas_arr):
            quot[i, j] = float(np.mean(d4 / dts ** (4.0 * beta)))
    return BVReport(
        k_tv_mean=float(record.k_tv_mean[-1]),
        k_tv_max=float(record.k_tv_max[-1]),
        betas=betas_arr,
        gaps=np.asarray(levels),
        quotients=quot,
    )


# ---------------------------------------------------------------------------
# contraction under shared noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionResult:
    """Squared-distance curve of two ensembles driven by the same noise."""

    times: np.ndarray
    curve: np.ndarray
    c_measured: float
    envelope_rate: float
    monotone_violations: int
    envelope_ok: bool

    @property
    def monotone(self) -> bool:
        return self.monotone_violations == 0


def contraction_test(
    spec: ProblemSpec,
    n: int,
    dt: float,
    seed: int,
    init_a: np.ndarray,
    init_b: np.ndarray,
    envelope_slack: float = 1.5,
) -> ContractionResult:
    """Evolve two ensembles under identical noise and track their distance.

    Both initial states must be feasible (inside the box, empirical mean at
    the schedule start).  The projection is non-expansive, so with zero
    drift the mean squared distance cannot increase; with a drift of
    one-sided Lipschitz constant ``c`` (measured on the regularized drift)
    the curve is checked against the envelope ``exp(2 c' t)`` with
    ``c' = envelope_slack * c``.  Monotonicity violations are counted beyond
    an allowance of ``1e-12 * curve(0)`` for accumulated roundoff.
    """
    q0 = float(spec.mean.q(0.0))
    for name, arr in (("init_a", init_a), ("init_b", init_b)):
        arr = np.asarray(arr, dtype=float)
        if arr.size != n:
            raise ValueError(f"{name} must have length {n}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
        if abs(float(np.mean(arr)) - q0) > 1e-9:
            raise ValueError(f"{name} empirical mean must match the schedule start {q0}")

    xa = np.asarray(init_a, dtype=float).copy()
    xb = np.asarray(init_b, dtype=float).copy()
    drift, sigma, mean = spec.drift, spec.sigma, spec.mean
    c_measured = 0.0 if drift.is_zero else one_sided_lipschitz_constant(drift.mu_eps)
    envelope_rate = envelope_slack * c_measured

    nsteps = max(1, int(np.ceil(spec.horizon / dt - 1e-12)))
    h = spec.horizon / nsteps
    sqrth = np.sqrt(h)
    times = np.empty(nsteps + 1)
    curve = np.empty(nsteps + 1)
    times[0] = 0.0
    curve[0] = float(np.mean((xa - xb) ** 2))

    t = 0.0
    for s in range(nsteps):
        noise = sigma * sqrth * normal_increments(seed, s, n)
        q_next = float(mean.q(t + h))
        if drift.is_zero:
            ya, yb = xa + noise, xb + noise
        else:
            ya = xa - drift.mu_eps(xa) * h + noise
            yb = xb - drift.mu_eps(xb) * h + noise
        xa = project_constrained(ya, q_next).x
        xb = project_constrained(yb, q_next).x
        t += h
        times[s + 1] = t
        curve[s + 1] = float(np.mean((xa - xb) ** 2))

    allowance = 1e-12 * max(curve[0], 1e-30)
    violations = int(np.sum(np.diff(curve) > allowance))
    envelope = curve[0] * np.exp(2.0 * envelope_rate * times) + allowance
    envelope_ok = bool(np.all(curve <= envelope))
    return ContractionResult(
        times=times,
        curve=curve,
        c_measured=c_measured,
        envelope_rate=envelope_rate,
        monotone_violations=violations,
        envelope_ok=envelope_ok,
    )
