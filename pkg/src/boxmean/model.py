"""Problem data: drift, boundary regularization, mean schedule, initial law.

A problem instance couples a drift ``mu`` on (0,1) (possibly singular at the
endpoints), a volatility ``sigma``, a Lipschitz target-mean schedule
``q(t)`` kept away from 0 and 1, and an initial law on [0,1] whose mean
matches ``q(0)``.  The drift enters the dynamics only through its
regularization ``mu_eps``: outside a boundary layer of width ``epsilon`` it
equals ``mu``; inside the layer it is a quintic Hermite blend that vanishes
to second order at the endpoint, matches value, slope and curvature of
``mu`` at the layer edge, and is clamped in magnitude by ``|mu|`` pointwise.

``validate_conditions`` checks, on grids, the standing structural
assumptions: a one-sided Lipschitz bound for the drift, boundedness of
``x |mu(x)|`` near the boundary, an outward sign condition near the walls,
vanishing of the regularized drift at the endpoints, and the band constraint
on the mean schedule.  Grid checks are necessary conditions: a failure is a
definite counterexample, a pass is evidence at the tested resolution.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .projection import project_constrained
from .rng import initial_uniforms

ArrayFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# drift regularization
# ---------------------------------------------------------------------------

def _hermite_coeffs(value: float, slope: float, curv: float, eps: float) -> tuple[float, float, float]:
    # weights of the three quintic basis polynomials t^3 (a + b t + c t^2)
    # matching (0,0,0) at t=0 and (value, slope, curv) at t=1 after the
    # chain-rule scaling by the layer width
    w3 = value
    w4 = eps * slope
    w5 = eps * eps * curv
    return w3, w4, w5


def _hermite_eval(t: np.ndarray, w3: float, w4: float, w5: float) -> np.ndarray:
    t3 = t * t * t
    b3 = t3 * (10.0 + t * (-15.0 + 6.0 * t))
    b4 = t3 * (-4.0 + t * (7.0 - 3.0 * t))
    b5 = t3 * (0.5 + t * (-1.0 + 0.5 * t))
    return w3 * b3 + w4 * b4 + w5 * b5


def regularize(
    mu: ArrayFn,
    epsilon: float,
    dmu: ArrayFn | None = None,
    d2mu: ArrayFn | None = None,
) -> ArrayFn:
    """Return the boundary-layer regularization of ``mu``.

    Parameters
    ----------
    mu : callable
        Vectorized drift, defined on the open interval (0, 1).
    epsilon : float
        Layer width, in (0, 1/2).
    dmu, d2mu : callable, optional
        First and second derivative of ``mu``.  When omitted they are
        estimated by central finite differences at the layer edges, which is
        adequate for smooth drifts; tabulated drifts get the same treatment.

    The result agrees with ``mu`` on ``[epsilon, 1 - epsilon]``, vanishes to
    second order at 0 and 1, and satisfies ``|mu_eps| <= |mu|`` pointwise on
    (0, 1).  Shrinking ``epsilon`` never changes values outside the old
    layer, so regularizations at nested widths agree where both are plain
    ``mu``.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")

    def edge_derivatives(x0: float) -> tuple[float, float, float]:
        v = float(np.asarray(mu(np.array([x0])))[0])
        if dmu is not None and d2mu is not None:
            d = float(np.asarray(dmu(np.array([x0])))[0])
            c = float(np.asarray(d2mu(np.array([x0])))[0])
            return v, d, c
        h = epsilon * 1e-3
        pts = np.array([x0 - h, x0, x0 + h])
        f = np.asarray(mu(pts), dtype=float)
        d = (f[2] - f[0]) / (2.0 * h)
        c = (f[2] - 2.0 * f[1] + f[0]) / (h * h)
        return v, d, c

    v0, d0, c0 = edge_derivatives(epsilon)
    w_left = _hermite_coeffs(v0, d0, c0, epsilon)
    v1, d1, c1 = edge_derivatives(1.0 - epsilon)
    # mirrored layer: the local coordinate runs from the endpoint inward
    w_right = _hermite_coeffs(v1, -d1, c1, epsilon)

    def mu_eps(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        left = x < epsilon
        right = x > 1.0 - epsilon
        mid = ~(left | right)
        if np.any(mid):
            out[mid] = mu(x[mid])
        for zone, w, local in ((left, w_left, lambda z: z / epsilon),
                               (right, w_right, lambda z: (1.0 - z) / epsilon)):
            if not np.any(zone):
                continue
            xz = x[zone]
            p = _hermite_eval(local(xz), *w)
            # clamp by |mu| strictly inside the interval; at the endpoints
            # the blend is already zero and mu may be singular
            cap = np.full_like(p, np.inf)
            interior = (xz > 0.0) & (xz < 1.0)
            if np.any(interior):
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    raw = np.abs(np.asarray(mu(xz[interior]), dtype=float))
                cap[interior] = np.where(np.isnan(raw), np.inf, raw)
            out[zone] = np.sign(p) * np.minimum(np.abs(p), cap)
        return out[0] if scalar else out

    return mu_eps


def one_sided_lipschitz_constant(f: ArrayFn, grid: int = 4096, lo: float = 0.0, hi: float = 1.0) -> float:
    """Smallest c >= 0 with -(f(x)-f(y))(x-y) <= c (x-y)^2 on a uniform grid.

    For difference quotients of a function sampled on a grid, the minimum
    over all pairs equals the minimum over adjacent pairs (every quotient is
    a convex combination of adjacent ones), so this is an O(grid) scan.
    """
    x = np.linspace(lo, hi, grid + 2)[1:-1]
    v = np.asarray(f(x), dtype=float)
    slopes = np.diff(v) / np.diff(x)
    return float(max(0.0, -np.min(slopes)))


# ---------------------------------------------------------------------------
# drift model and presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftModel:
    """Drift together with its boundary regularization.

    ``c`` is the declared one-sided Lipschitz constant of ``mu`` and ``rho``
    the half-width of the boundary region where the outward sign condition
    is required.  ``mu_eps`` is derived via :func:`regularize` unless the
    drift is identically zero, in which case the zero function is kept as is
    (``is_zero`` lets hot loops skip the drift term entirely).
    """

    name: str
    mu: ArrayFn
    epsilon: float
    rho: float = 0.25
    c: float = 0.0
    is_zero: bool = False
    mu_eps: ArrayFn = field(init=False, repr=False)
    dmu: ArrayFn | None = field(default=None, repr=False)
    d2mu: ArrayFn | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 0.5:
            raise ValueError(f"rho must lie in (0, 1/2), got {self.rho}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if self.c < 0.0:
            raise ValueError("one-sided Lipschitz constant must be nonnegative")
        if self.is_zero:
            object.__setattr__(self, "mu_eps", self.mu)
        else:
            object.__setattr__(self, "mu_eps", regularize(self.mu, self.epsilon, self.dmu, self.d2mu))


def zero_drift(epsilon: float = 0.05, rho: float = 0.25) -> DriftModel:
    """Drift-free model; reflection and the mean constraint do all the work."""
    def mu(x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    return DriftModel(name="zero", mu=mu, epsilon=epsilon, rho=rho, c=0.0, is_zero=True)


def double_well_log_drift(
    theta: float = 0.2,
    a: float = 1.0,
    epsilon: float = 0.05,
    rho: float = 0.25,
) -> DriftModel:
    """Logarithmic potential drift ``mu(x) = theta log(x/(1-x)) + a (x - 1/2)``.

    For ``theta, a > 0`` the drift is increasing, so its one-sided Lipschitz
    constant is 0; it diverges at the walls with ``x |mu| -> 0`` and points
    outward on both boundary regions.
    """
    if theta < 0.0 or a < 0.0:
        raise ValueError("theta and a must be nonnegative")

    def mu(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return theta * np.log(x / (1.0 - x)) + a * (x - 0.5)

    def dmu(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return theta / (x * (1.0 - x)) + a

    def d2mu(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return theta * (2.0 * x - 1.0) / (x * (1.0 - x)) ** 2

    return DriftModel(name="double_well_log", mu=mu, epsilon=epsilon, rho=rho,
                      c=0.0, dmu=dmu, d2mu=d2mu)


def linear_drift(slope: float = 1.0, epsilon: float = 0.05, rho: float = 0.25) -> DriftModel:
    """Centering drift ``mu(x) = slope (x - 1/2)``; handy as a smooth test case."""
    def mu(x: np.ndarray) -> np.ndarray:
        return slope * (np.asarray(x, dtype=float) - 0.5)

    def dmu(x: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), slope)

    def d2mu(x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    c = max(0.0, -slope)
    return DriftModel(name="linear", mu=mu, epsilon=epsilon, rho=rho, c=c, dmu=dmu, d2mu=d2mu)


def tabulated_drift(
    x: Sequence[float],
    values: Sequence[float],
    epsilon: float = 0.05,
    rho: float = 0.25,
    c: float | None = None,
) -> DriftModel:
    """Drift given by samples, linearly interpolated on (0, 1)."""
    xs = np.asarray(x, dtype=float)
    vs = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
        raise ValueError("tabulated drift needs matching 1-d x and value arrays")
    if np.any(np.diff(xs) <= 0.0):
        raise ValueError("tabulated drift abscissae must be strictly increasing")

    def mu(z: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(z, dtype=float), xs, vs)

    slopes = np.diff(vs) / np.diff(xs)
    c_decl = float(max(0.0, -slopes.min())) if c is None else c
    return DriftModel(name="tabulated", mu=mu, epsilon=epsilon, rho=rho, c=c_decl)


DRIFT_PRESETS: dict[str, Callable[..., DriftModel]] = {
    "zero": zero_drift,
    "double_well_log": double_well_log_drift,
    "linear": linear_drift,
}


# ---------------------------------------------------------------------------
# mean schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanSchedule:
    """Piecewise-linear target mean ``q(t)`` with its exclusion band ``xi``.

    Outside the breakpoint range the schedule extends as a constant, and the
    slope used at a breakpoint is the right-hand one.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    xi: float

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size < 1:
            raise ValueError("breakpoints and values must be matching nonempty 1-d sequences")
        if bp.size > 1 and np.any(np.diff(bp) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if not 0.0 < self.xi < 0.5:
            raise ValueError(f"xi must lie in (0, 1/2), got {self.xi}")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in bp))
        object.__setattr__(self, "values", tuple(float(v) for v in vals))

    def q(self, t: float | np.ndarray) -> float | np.ndarray:
        out = np.interp(t, self.breakpoints, self.values)
        return float(out) if np.ndim(t) == 0 else out

    def qdot(self, t: float) -> float:
        bp = self.breakpoints
        if len(bp) == 1 or t < bp[0] or t >= bp[-1]:
            return 0.0
        i = int(np.searchsorted(bp, t, side="right")) - 1
        i = min(max(i, 0), len(bp) - 2)
        return (self.values[i + 1] - self.values[i]) / (bp[i + 1] - bp[i])

    def lipschitz_constant(self) -> float:
        if len(self.breakpoints) == 1:
            return 0.0
        slopes = np.diff(self.values) / np.diff(self.breakpoints)
        return float(np.max(np.abs(slopes)))


def constant_schedule(q: float, xi: float | None = None) -> MeanSchedule:
    if xi is None:
        xi = min(q, 1.0 - q) * 0.8
    return MeanSchedule(breakpoints=(0.0,), values=(q,), xi=xi)


# ---------------------------------------------------------------------------
# initial law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution on [0,1]: uniform, Beta(a,b), or explicit samples.

    Sampling goes through inverse transforms of addressed uniforms so that
    coupled runs of different sizes share their initial draws (see
    :mod:`boxmean.rng`).
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    samples: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "beta", "samples"):
            raise ValueError(f"unknown initial law kind: {self.kind}")
        if self.kind == "beta" and (self.a <= 0.0 or self.b <= 0.0):
            raise ValueError("beta parameters must be positive")
        if self.kind == "samples":
            if self.samples is None or len(self.samples) == 0:
                raise ValueError("samples kind requires a nonempty sample list")
            arr = np.asarray(self.samples, dtype=float)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("initial samples must lie in [0, 1]")

    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5
        if self.kind == "beta":
            return self.a / (self.a + self.b)
        return float(np.mean(self.samples))

    def sample(self, n: int, seed: int) -> np.ndarray:
        if self.kind == "samples":
            arr = np.asarray(self.samples, dtype=float)
            if arr.size != n:
                raise ValueError(f"explicit sample list has {arr.size} entries, requested {n}")
            return arr.copy()
        u = initial_uniforms(seed, n)
        if self.kind == "uniform":
            return u
        return np.asarray(stats.beta.ppf(u, self.a, self.b), dtype=float)

    def density_on_grid(self, m: int) -> np.ndarray:
        centers = (np.arange(m) + 0.5) / m
        if self.kind == "uniform":
            u = np.ones(m)
        elif self.kind == "beta":
            u = np.asarray(stats.beta.pdf(centers, self.a, self.b), dtype=float)
        else:
            hist, _ = np.histogram(np.asarray(self.samples, dtype=float),
                                   bins=m, range=(0.0, 1.0), density=True)
            u = hist.astype(float)
        return u / (np.sum(u) / m)


# ---------------------------------------------------------------------------
# problem spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """Complete problem instance; immutable so runs can share it freely."""

    drift: DriftModel
    mean: MeanSchedule
    sigma: float
    horizon: float
    initial: InitialLaw

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_config(cls, cfg: dict) -> "ProblemSpec":
        """Build a spec from a plain-dict configuration (the JSON schema).

        Keys: ``drift`` (preset name, or a dict with ``kind`` plus
        parameters, or a dict with ``x``/``mu`` arrays for tabulated data),
        ``epsilon``, ``sigma``, ``mean_schedule`` (``breakpoints``,
        ``values``, ``xi``), ``horizon``, ``initial`` (``kind``, ``params``).
        """
        eps = float(cfg.get("epsilon", 0.05))
        dcfg = cfg["drift"]
        if isinstance(dcfg, str):
            dcfg = {"kind": dcfg}
        kind = dcfg.get("kind", "zero")
        kwargs = {k: v for k, v in dcfg.items() if k != "kind"}
        kwargs.setdefault("epsilon", eps)
        if kind == "tabulated" or ("x" in dcfg and "mu" in dcfg):
            kwargs = dict(kwargs)
            kwargs["values"] = kwargs.pop("mu")
            drift = tabulated_drift(**kwargs)
        elif kind in DRIFT_PRESETS:
            drift = DRIFT_PRESETS[kind](**kwargs)
        else:
            raise ValueError(f"unknown drift preset: {kind}")

        mcfg = cfg["mean_schedule"]
        mean = MeanSchedule(breakpoints=tuple(mcfg["breakpoints"]),
                            values=tuple(mcfg["values"]),
                            xi=float(mcfg["xi"]))
        icfg = cfg.get("initial", {"kind": "uniform"})
        params = dict(icfg.get("params", {}))
        initial = InitialLaw(kind=icfg["kind"],
                             a=float(params.get("a", 1.0)),
                             b=float(params.get("b", 1.0)),
                             samples=tuple(params["samples"]) if "samples" in params else None)
        return cls(drift=drift, mean=mean, sigma=float(cfg.get("sigma", 1.0)),
                   horizon=float(cfg["horizon"]), initial=initial)


# ---------------------------------------------------------------------------
# condition validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    value: float
    witness: str = ""
    informational: bool = False


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ConditionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.passed and not c.informational]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            tag = " (info)" if c.informational else ""
            wit = f"  [{c.witness}]" if c.witness else ""
            lines.append(f"{status}{tag}  {c.name} = {c.value:.6g}{wit}")
        return "\n".join(lines)


def validate_conditions(spec: ProblemSpec, grid: int = 4096) -> ValidationReport:
    """Grid checks of the structural assumptions; see module docstring.

    The interior grid is ``x_i = i/(grid+1)``, so refining ``grid`` to
    ``2*grid + 1`` keeps every old point: a failure witnessed at some
    resolution persists at every finer resolution containing the witness.
    """
    drift, mean = spec.drift, spec.mean
    x = np.arange(1, grid + 1) / (grid + 1.0)
    mu_x = np.asarray(drift.mu(x), dtype=float)
    checks: list[ConditionCheck] = []

    # one-sided Lipschitz bound of the raw drift against the declared c
    slopes = np.diff(mu_x) / np.diff(x)
    c_hat = float(max(0.0, -np.min(slopes)))
    i_min = int(np.argmin(slopes))
    checks.append(ConditionCheck(
        name="one_sided_lipschitz",
        passed=c_hat <= drift.c * (1.0 + 1e-9) + 1e-9,
        value=c_hat,
        witness="" if c_hat == 0.0 else f"steepest decrease near x={x[i_min]:.6g}",
    ))
    c_eps = one_sided_lipschitz_constant(drift.mu_eps, grid)
    checks.append(ConditionCheck(
        name="one_sided_lipschitz_regularized", passed=True, value=c_eps,
        witness="measured on the regularized drift", informational=True,
    ))

    # boundedness of x|mu| and (1-x)|mu| on a geometric approach to the walls
    depths = 2.0 ** -np.arange(2, 40)
    with np.errstate(all="ignore"):
        w_lo = depths * np.abs(np.asarray(drift.mu(depths), dtype=float))
        w_hi = depths * np.abs(np.asarray(drift.mu(1.0 - depths), dtype=float))
    for name, w in (("boundary_growth_lower", w_lo), ("boundary_growth_upper", w_hi)):
        w = np.where(np.isfinite(w), w, np.inf)
        tail_ok = bool(np.all(w[-3:] <= w[-4] * 1.05 + 1e-12)) and np.all(np.isfinite(w[-3:]))
        checks.append(ConditionCheck(
            name=name, passed=tail_ok, value=float(np.max(w)),
            witness="" if tail_ok else "x|mu| grows along the boundary approach",
        ))

    # outward sign condition near both walls
    rho = drift.rho
    zone = (x < rho) | (x > 1.0 - rho)
    signed = np.sign(x[zone] - 0.5) * mu_x[zone]
    worst = float(np.min(signed)) if signed.size else 0.0
    j = int(np.argmin(signed)) if signed.size else 0
    checks.append(ConditionCheck(
        name="sign_condition", passed=worst >= -1e-12, value=worst,
        witness="" if worst >= -1e-12 else f"sign(x-1/2) mu(x) < 0 at x={x[zone][j]:.6g}",
    ))
    checks.append(ConditionCheck(
        name="epsilon_below_rho", passed=drift.epsilon < rho, value=drift.epsilon,
        witness="" if drift.epsilon < rho else "layer width must stay inside the sign region",
    ))

    # endpoint vanishing, applied to the regularized drift; raw values at the
    # grid extremes are recorded for reference since mu itself may blow up
    e0 = float(np.asarray(drift.mu_eps(np.array([0.0])))[0])
    e1 = float(np.asarray(drift.mu_eps(np.array([1.0])))[0])
    checks.append(ConditionCheck(
        name="endpoint_zero_regularized", passed=(e0 == 0.0 and e1 == 0.0),
        value=max(abs(e0), abs(e1)),
        witness=f"raw drift at {x[0]:.3g}/{x[-1]:.3g}: {mu_x[0]:.3g}/{mu_x[-1]:.3g}",
    ))

    # mean schedule: band constraint and Lipschitz bound
    vals = np.asarray(mean.values)
    lo_viol = float(np.min(vals) - mean.xi)
    hi_viol = float((1.0 - mean.xi) - np.max(vals))
    band_ok = lo_viol >= 0.0 and hi_viol >= 0.0
    if not band_ok:
        t_bad = mean.breakpoints[int(np.argmin(vals)) if lo_viol < hi_viol else int(np.argmax(vals))]
        wit = f"q(t) < xi at t={t_bad:.6g}" if lo_viol < hi_viol else f"q(t) > 1-xi at t={t_bad:.6g}"
    else:
        wit = ""
    checks.append(ConditionCheck(
        name="mean_schedule_band", passed=band_ok, value=min(lo_viol, hi_viol), witness=wit,
    ))
    checks.append(ConditionCheck(
        name="mean_schedule_lipschitz", passed=True,
        value=mean.lipschitz_constant(), informational=True,
    ))

    return ValidationReport(checks=tuple(checks))


def recenter_initial(samples: np.ndarray, q0: float) -> np.ndarray:
    """Shift samples to empirical mean ``q0``; project if the shift exits the box.

    The uniform shift preserves the shape of the cloud exactly; only when a
    shifted sample leaves [0,1] does the constrained projection redistribute
    the excess.  Up to roundoff the map is idempotent.
    """
    samples = np.asarray(samples, dtype=float)
    shifted = samples + (q0 - float(np.mean(samples)))
    if shifted.min() >= 0.0 and shifted.max() <= 1.0:
        return shifted
    return project_constrained(shifted, q0).x
