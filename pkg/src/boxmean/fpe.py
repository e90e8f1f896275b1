"""Finite-volume solver for the mean-constrained Fokker-Planck equation.

The limiting density ``u(t, x)`` on [0,1] satisfies

    du/dt + d/dx[ (kdot - mu(x)) u ] = (sigma^2/2) d^2u/dx^2,

with zero total flux through both walls and the moment constraint
``int x u dx = q(t)``.  The constraint is enforced through the uniform
drift component

    kdot = qdot(t) + int mu u dx + (sigma^2/2) (u(1) - u(0)),

which is exactly the value that makes the moment derivative equal ``qdot``
under the no-flux boundary conditions.

Discretization: uniform cells, upwind advection treated explicitly,
diffusion treated implicitly (tridiagonal solve), boundary face fluxes set
identically to zero, ``kdot`` frozen at the step start.  Mass is conserved
to round-off because fluxes telescope; positivity is preserved under the
advective CFL condition, which is checked every step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .model import ArrayFn, ProblemSpec


@dataclass(frozen=True)
class DensityGrid:
    """Cell-averaged density on a uniform grid of ``m`` cells over [0,1]."""

    u: np.ndarray
    t: float
    kdot: float = 0.0

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or u.size < 3:
            raise ValueError("density needs at least 3 cells")
        object.__setattr__(self, "u", u)

    @property
    def m(self) -> int:
        return self.u.size

    @property
    def dx(self) -> float:
        return 1.0 / self.u.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dx

    def mass(self) -> float:
        return float(np.sum(self.u) * self.dx)

    def moment(self) -> float:
        return float(np.sum(self.centers * self.u) * self.dx)


def boundary_values(u: np.ndarray) -> tuple[float, float]:
    """Wall values by one-sided quadratic extrapolation of the last three cells.

    Exact for densities that are linear across the three cells adjacent to
    a wall; weights are (15, -10, 3)/8 ordered from the wall inward.
    """
    u0 = (15.0 * u[0] - 10.0 * u[1] + 3.0 * u[2]) / 8.0
    u1 = (15.0 * u[-1] - 10.0 * u[-2] + 3.0 * u[-3]) / 8.0
    return float(u0), float(u1)


def kdot_from_density(grid: DensityGrid, qdot: float, mu_eps: ArrayFn, sigma: float) -> float:
    """Uniform drift component that keeps the moment on schedule."""
    u = grid.u
    drift_term = float(np.sum(np.asarray(mu_eps(grid.centers), dtype=float) * u) * grid.dx)
    u_lo, u_hi = boundary_values(u)
    return qdot + drift_term + 0.5 * sigma * sigma * (u_hi - u_lo)


class CFLError(RuntimeError):
    """Raised when the explicit advection step would violate its CFL bound."""


def fpe_step(
    grid: DensityGrid,
    dt: float,
    mu_eps: ArrayFn,
    sigma: float,
    qdot: float,
    q_next: float | None = None,
    moment_correct: bool = False,
    kdot_override: float | None = None,
) -> DensityGrid:
    """Advance the density by one step of size ``dt``.

    ``kdot`` is evaluated from the current density and frozen for the step.
    With ``moment_correct=True`` a feedback term ``(q_next - moment)/dt`` is
    added to ``kdot`` (off by default; the plain formula already keeps the
    moment within first-order accuracy).  ``kdot_override`` replaces the
    computed value entirely; the unconstrained solver passes 0.
    """
    m, dx, u = grid.m, grid.dx, grid.u
    if kdot_override is not None:
        kdot = kdot_override
    else:
        kdot = kdot_from_density(grid, qdot, mu_eps, sigma)
        if moment_correct:
            if q_next is None:
                raise ValueError("moment correction needs the target mean at the end of the step")
            kdot += (q_next - grid.moment()) / dt

    faces = np.arange(1, m) * dx
    v = kdot - np.asarray(mu_eps(faces), dtype=float)
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    if vmax * dt / dx > 0.9:
        raise CFLError(
            f"advective CFL exceeded: |v|max={vmax:.4g} needs dt <= {0.9 * dx / max(vmax, 1e-300):.4g}, got {dt:.4g}"
        )

    # explicit upwind advection; boundary faces carry no flux
    flux = np.where(v >= 0.0, v * u[:-1], v * u[1:])
    ustar = u.copy()
    ustar[:-1] -= (dt / dx) * flux
    ustar[1:] += (dt / dx) * flux

    # implicit diffusion with zero-flux walls (tridiagonal solve)
    if sigma > 0.0:
        r = 0.5 * sigma * sigma * dt / (dx * dx)
        band = np.zeros((3, m))
        band[0, 1:] = -r
        band[2, :-1] = -r
        band[1, :] = 1.0 + 2.0 * r
        band[1, 0] = 1.0 + r
        band[1, -1] = 1.0 + r
        unew = solve_banded((1, 1), band, ustar, check_finite=False)
    else:
        unew = ustar

    return DensityGrid(u=unew, t=grid.t + dt, kdot=kdot)


def _initial_grid(spec: ProblemSpec, m: int) -> DensityGrid:
    grid = DensityGrid(u=spec.initial.density_on_grid(m), t=0.0)
    q0 = float(spec.mean.q(0.0))
    drift_moment = grid.moment()
    if abs(drift_moment - q0) > 5e-4:
        raise ValueError(
            f"initial law has moment {drift_moment:.6g} but the schedule starts at {q0:.6g}; "
            "supply an initial law whose mean matches q(0)"
        )
    return grid


def solve_fpe(
    spec: ProblemSpec,
    m: int,
    dt: float,
    snapshot_times: np.ndarray,
    moment_correct: bool = False,
) -> tuple[list[DensityGrid], dict]:
    """Solve the constrained equation, returning snapshots and diagnostics.

    ``dt`` is reduced per snapshot interval so steps tile each interval
    exactly.  Diagnostics carry per-step time, mass, moment, ``kdot`` and
    moment residual ``moment - q(t)``.
    """
    times = np.asarray(snapshot_times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("snapshot times must be strictly increasing")
    if times[0] < 0.0 or times[-1] > spec.horizon + 1e-12:
        raise ValueError("snapshot times must lie within [0, horizon]")

    grid = _initial_grid(spec, m)
    mu_eps, sigma, mean = spec.drift.mu_eps, spec.sigma, spec.mean
    snaps: list[DensityGrid] = []
    diag: dict[str, list[float]] = {"t": [], "mass": [], "moment": [], "kdot": [], "moment_residual": []}

    def record(g: DensityGrid) -> None:
        diag["t"].append(g.t)
        diag["mass"].append(g.mass())
        diag["moment"].append(g.moment())
        diag["kdot"].append(g.kdot)
        diag["moment_residual"].append(g.moment() - float(mean.q(g.t)))

    record(grid)
    if times[0] == 0.0:
        snaps.append(grid)
        remaining = times[1:]
    else:
        remaining = times

    t_prev = 0.0
    for t_next in remaining:
        gap = t_next - t_prev
        nsteps = max(1, int(np.ceil(gap / dt - 1e-12)))
        h = gap / nsteps
        for _ in range(nsteps):
            qdot = mean.qdot(grid.t)
            q_next = float(mean.q(grid.t + h))
            grid = fpe_step(grid, h, mu_eps, sigma, qdot, q_next=q_next, moment_correct=moment_correct)
            record(grid)
        grid = replace(grid, t=float(t_next))  # absorb additive time roundoff
        snaps.append(grid)
        t_prev = float(t_next)

    return snaps, {k: np.asarray(v) for k, v in diag.items()}


def solve_neumann_fpe(
    drift_b: ArrayFn,
    sigma: float,
    m: int,
    dt: float,
    u0: np.ndarray,
    snapshot_times: np.ndarray,
) -> tuple[list[DensityGrid], dict]:
    """Plain reflected-diffusion Fokker-Planck solve (no mean constraint).

    The density of ``dX = b(X) dt + sigma dW`` reflected at both walls obeys
    the same equation with ``kdot = 0`` and velocity ``b``; this provides an
    independent oracle for duality tests against unconstrained particle runs.
    """
    times = np.asarray(snapshot_times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("snapshot times must be strictly increasing")

    def neg_b(x: np.ndarray) -> np.ndarray:
        return -np.asarray(drift_b(x), dtype=float)

    grid = DensityGrid(u=np.asarray(u0, dtype=float), t=0.0)
    if abs(grid.mass() - 1.0) > 1e-8:
        raise ValueError(f"initial density mass is {grid.mass():.8g}, expected 1")
    snaps: list[DensityGrid] = []
    diag: dict[str, list[float]] = {"t": [], "mass": [], "moment": [], "kdot": []}

    def record(g: DensityGrid) -> None:
        diag["t"].append(g.t)
        diag["mass"].append(g.mass())
        diag["moment"].append(g.moment())
        diag["kdot"].append(g.kdot)

    record(grid)
    if times[0] == 0.0:
        snaps.append(grid)
        remaining = times[1:]
    else:
        remaining = times

    t_prev = 0.0
    for t_next in remaining:
        gap = t_next - t_prev
        nsteps = max(1, int(np.ceil(gap / dt - 1e-12)))
        h = gap / nsteps
        for _ in range(nsteps):
            # no mean constraint: the uniform drift component is exactly zero
            grid = fpe_step(grid, h, neg_b, sigma, qdot=0.0, kdot_override=0.0)
            record(grid)
        grid = replace(grid, t=float(t_next))
        snaps.append(grid)
        t_prev = float(t_next)

    return snaps, {k: np.asarray(v) for k, v in diag.items()}
