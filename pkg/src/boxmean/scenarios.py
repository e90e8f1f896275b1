"""Packaged experiments: configs, runners, analysis and report aggregation.

Five scenarios cover the verification surface:

* ``prototype``  -- zero drift, unit volatility, constant mean 1/2; checks
  that the per-step mean constraint holds to near machine precision.
* ``battery``    -- logarithmic double-well drift with a charge-style ramp
  of the target mean; particle marginals against the density oracle.
* ``rate_sweep`` -- noise-coupled runs over increasing particle counts;
  convergence-rate table against the density oracle.
* ``duality``    -- unconstrained reflected diffusions against the no-flux
  density solve; Monte Carlo means of test statistics vs quadrature.
* ``contraction``-- twin ensembles under shared noise; squared-distance
  monotonicity (zero drift) and an exponential envelope (general drift).

Every runner writes CSV outputs plus a ``run_meta.json`` manifest with the
resolved configuration, a content hash, library versions and wall-clock
time.  Independent jobs inside a scenario fan out over a thread pool sized
by the ``SIM_THREADS`` environment variable; outputs do not depend on the
thread count because every job is a pure function of addressed streams.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .fpe import solve_fpe, solve_neumann_fpe
from .io import read_csv, read_json, write_csv, write_density_run, write_json, write_run
from .metrics import (
    bv_holder_report,
    contraction_test,
    rate_study,
    w2_density_density,
    w2_empirical_density,
)
from .model import ProblemSpec, recenter_initial, validate_conditions
from .particles import simulate, simulate_coupled, simulate_no_interaction
from .rng import stream, DOMAIN_AUX

SCENARIOS = ("prototype", "battery", "rate_sweep", "duality", "contraction")


def sim_threads() -> int:
    try:
        return max(1, int(os.environ.get("SIM_THREADS", "1")))
    except ValueError:
        return 1


def _pool_map(fn, jobs):
    threads = sim_threads()
    if threads == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _manifest(scenario: str, cfg: dict, params: dict, t0: float) -> dict:
    import scipy

    return {
        "scenario": scenario,
        "config": cfg,
        "config_hash": config_hash({"config": cfg, "params": params}),
        "params": params,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "sim_threads": sim_threads(),
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    }


# ---------------------------------------------------------------------------
# scenario configurations
# ---------------------------------------------------------------------------

def prototype_config() -> dict:
    return {
        "drift": "zero",
        "epsilon": 0.05,
        "sigma": 1.0,
        "mean_schedule": {"breakpoints": [0.0], "values": [0.5], "xi": 0.4},
        "horizon": 1.0,
        "initial": {"kind": "uniform"},
    }


def battery_config() -> dict:
    # illustrative defaults: ramp the mean 0.3 -> 0.7 over one time unit,
    # then hold; parameters keep the structural conditions satisfied
    return {
        "drift": {"kind": "double_well_log", "theta": 0.2, "a": 1.0, "rho": 0.25},
        "epsilon": 0.05,
        "sigma": 1.0,
        "mean_schedule": {"breakpoints": [0.0, 1.0, 1.25], "values": [0.3, 0.7, 0.7], "xi": 0.25},
        "horizon": 1.25,
        "initial": {"kind": "beta", "params": {"a": 3.0, "b": 7.0}},
    }


def _require_valid(spec: ProblemSpec) -> None:
    report = validate_conditions(spec)
    if not report.passed:
        raise ValueError("scenario configuration fails condition validation:\n" + str(report))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def run_prototype(out_dir: str | Path, n: int = 10_000, dt: float = 1e-4,
                  seed: int = 0, horizon: float | None = None) -> dict:
    t0 = time.perf_counter()
    cfg = prototype_config()
    if horizon is not None:
        cfg["horizon"] = horizon
    spec = ProblemSpec.from_config(cfg)
    _require_valid(spec)
    snaps = np.linspace(0.0, spec.horizon, 11)
    record = simulate(spec, n, dt, seed, snaps)
    out = Path(out_dir)
    write_run(out, record)
    verdict = {"constraint_residual_max": record.max_residual(),
               "constraint_ok": bool(record.max_residual() <= 1e-10)}
    write_json(out / "report.json", {"scenario": "prototype", "verdicts": verdict})
    meta = _manifest("prototype", cfg, {"n": n, "dt": dt, "seed": seed}, t0)
    write_json(out / "run_meta.json", meta)
    return verdict


def run_battery(out_dir: str | Path, n_list: tuple[int, ...] = (10_000,),
                seeds: int = 5, dt: float = 5e-4, cells: int = 400,
                fpe_dt: float = 2e-4, n_snapshots: int = 21) -> dict:
    t0 = time.perf_counter()
    cfg = battery_config()
    spec = ProblemSpec.from_config(cfg)
    _require_valid(spec)
    snaps = np.linspace(0.0, spec.horizon, n_snapshots)
    out = Path(out_dir)

    pde, diag = solve_fpe(spec, cells, fpe_dt, snaps)
    write_density_run(out / "fpe", pde, diag)

    def job(args):
        n, seed = args
        rec = simulate(spec, n, dt, seed, snaps)
        write_run(out / "runs" / f"n{n}_seed{seed}", rec)
        sup_w2 = max(w2_empirical_density(m, g) for m, g in zip(rec.marginals, pde))
        return n, seed, sup_w2, rec.max_residual()

    jobs = [(n, s) for n in n_list for s in range(seeds)]
    results = _pool_map(job, jobs)
    rows = [(n, s, w, r) for n, s, w, r in results]
    write_csv(out / "battery_w2.csv", ["n", "seed", "sup_w2", "constraint_residual"], rows)

    verdict = {}
    for n in n_list:
        med = float(np.median([w for nn, _, w, _ in results if nn == n]))
        verdict[f"median_sup_w2_n{n}"] = med
    first = verdict[f"median_sup_w2_n{n_list[0]}"]
    verdict["agreement_ok"] = bool(first <= 0.03)
    if len(n_list) > 1:
        meds = [verdict[f"median_sup_w2_n{n}"] for n in n_list]
        verdict["decreasing_ok"] = bool(all(b < a for a, b in zip(meds, meds[1:])))
    verdict["moment_residual_max"] = float(np.max(np.abs(diag["moment_residual"])))
    write_json(out / "report.json", {"scenario": "battery", "verdicts": verdict})
    write_json(out / "run_meta.json", _manifest(
        "battery", cfg, {"n_list": list(n_list), "seeds": seeds, "dt": dt,
                         "cells": cells, "fpe_dt": fpe_dt}, t0))
    return verdict


def run_rate_sweep(out_dir: str | Path, n_list: tuple[int, ...] = (100, 400, 1600, 6400),
                   seeds: int = 10, dt: float = 1e-4, cells: int = 400,
                   fpe_dt: float = 1e-4, horizon: float = 0.5) -> dict:
    t0 = time.perf_counter()
    cfg = prototype_config()
    cfg["horizon"] = horizon
    spec = ProblemSpec.from_config(cfg)
    _require_valid(spec)
    snaps = np.linspace(0.0, horizon, 21)
    out = Path(out_dir)

    pde, diag = solve_fpe(spec, cells, fpe_dt, snaps)
    write_density_run(out / "fpe", pde, diag)
    pde_fine, _ = solve_fpe(spec, 2 * cells, fpe_dt / 2.0, snaps)
    floor = max(w2_density_density(a, b) for a, b in zip(pde, pde_fine))

    def job(seed):
        recs = simulate_coupled(spec, list(n_list), dt, seed, snaps)
        for rec in recs:
            write_run(out / "runs" / f"n{rec.n}_seed{seed}", rec)
        return seed, recs

    results = dict(_pool_map(job, list(range(seeds))))
    records_by_n = [(n, [results[s][i] for s in range(seeds)]) for i, n in enumerate(n_list)]
    table = rate_study(records_by_n, pde, pde_floor=floor)

    header = ["n", "median_sup_w2", "err_times_sqrt_log_n"] + [f"seed{j}" for j in range(seeds)]
    write_csv(out / "rate_table.csv", header,
              [[r["n"], r["median_sup_w2"], r["err_times_sqrt_log_n"]]
               + [r[f"seed{j}"] for j in range(seeds)] for r in table.rows()])
    verdict = {
        "strictly_decreasing": table.strictly_decreasing,
        "exponent_n": table.exponent_n,
        "exponent_in_band": bool(0.2 <= table.exponent_n <= 0.7),
        "slope_vs_inv_sqrt_n": table.slope_vs_inv_sqrt_n,
        "slope_vs_inv_sqrt_log_n": table.slope_vs_inv_sqrt_log_n,
        "log_consistency_ok": table.log_consistency_ok,
        "pde_floor": table.floor,
    }
    write_json(out / "report.json", {"scenario": "rate_sweep", "verdicts": verdict})
    write_json(out / "run_meta.json", _manifest(
        "rate_sweep", cfg, {"n_list": list(n_list), "seeds": seeds, "dt": dt,
                            "cells": cells, "fpe_dt": fpe_dt}, t0))
    return verdict


def duality_rows(drift_name: str, n: int = 100_000, dt: float = 5e-5,
                 cells: int = 400, fpe_dt: float = 1e-4, seed: int = 0,
                 horizon: float = 1.0) -> list[dict]:
    """Monte Carlo vs quadrature means of test statistics at the horizon.

    Runs independent reflected particles and the matching no-flux density
    solve from the same uniform initial law and compares E[psi(X_T)] between
    the two for psi in {x, x^2, cos(pi x)}.
    """
    cfg = {
        "drift": drift_name,
        "epsilon": 0.05,
        "sigma": 1.0,
        "mean_schedule": {"breakpoints": [0.0], "values": [0.5], "xi": 0.4},
        "horizon": horizon,
        "initial": {"kind": "uniform"},
    }
    spec = ProblemSpec.from_config(cfg)
    snaps = np.array([horizon])
    rec = simulate_no_interaction(spec, n, dt, seed, snaps)
    x_t = rec.positions[-1]

    pde, _ = solve_neumann_fpe(lambda z: -spec.drift.mu_eps(z), spec.sigma,
                               cells, fpe_dt, np.ones(cells), snaps)
    g = pde[-1]
    centers, u = g.centers, g.u

    stats = [("x", lambda z: z), ("x^2", lambda z: z * z),
             ("cos_pi_x", lambda z: np.cos(np.pi * z))]
    rows = []
    for name, psi in stats:
        vals = psi(x_t)
        mc = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / np.sqrt(n))
        quad = float(np.sum(psi(centers) * u) / cells)
        rows.append({
            "drift": drift_name, "psi": name, "mc_mean": mc, "mc_se": se,
            "pde_mean": quad, "abs_diff": abs(mc - quad),
            "ok": bool(abs(mc - quad) <= 3.0 * se),
        })
    return rows


def run_duality(out_dir: str | Path, n: int = 100_000, dt: float = 5e-5,
                cells: int = 400, fpe_dt: float = 1e-4, seed: int = 0) -> dict:
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for drift_name in ("zero", "linear"):
        rows.extend(duality_rows(drift_name, n=n, dt=dt, cells=cells, fpe_dt=fpe_dt, seed=seed))
    write_csv(out / "duality.csv",
              ["drift", "psi", "mc_mean", "mc_se", "pde_mean", "abs_diff", "ok"],
              [[r["drift"], r["psi"], r["mc_mean"], r["mc_se"], r["pde_mean"],
                r["abs_diff"], r["ok"]] for r in rows])
    verdict = {"all_within_3se": bool(all(r["ok"] for r in rows)),
               "worst_diff_over_se": float(max(r["abs_diff"] / r["mc_se"] for r in rows))}
    write_json(out / "report.json", {"scenario": "duality", "verdicts": verdict})
    write_json(out / "run_meta.json", _manifest(
        "duality", {"drifts": ["zero", "linear"]},
        {"n": n, "dt": dt, "cells": cells, "fpe_dt": fpe_dt, "seed": seed}, t0))
    return verdict


def run_contraction(out_dir: str | Path, n: int = 2000, dt: float = 1e-3,
                    seed: int = 0, horizon: float = 1.0) -> dict:
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aux = stream(seed, DOMAIN_AUX, 0)
    verdict = {}
    all_rows = []
    for label, cfg in (("zero", prototype_config()), ("double_well_log", battery_config())):
        cfg = dict(cfg)
        cfg["horizon"] = horizon
        spec = ProblemSpec.from_config(cfg)
        q0 = float(spec.mean.q(0.0))
        init_a = recenter_initial(aux.random(n), q0)
        init_b = recenter_initial(np.asarray(aux.beta(2.0, 2.0, size=n)), q0)
        res = contraction_test(spec, n, dt, seed, init_a, init_b)
        for t, c in zip(res.times, res.curve):
            all_rows.append((label, t, c))
        verdict[f"{label}_monotone_violations"] = res.monotone_violations
        verdict[f"{label}_envelope_ok"] = res.envelope_ok
        verdict[f"{label}_c_measured"] = res.c_measured
    verdict["zero_monotone_ok"] = verdict["zero_monotone_violations"] == 0
    write_csv(out / "contraction.csv", ["drift", "time", "mean_sq_distance"], all_rows)
    write_json(out / "report.json", {"scenario": "contraction", "verdicts": verdict})
    write_json(out / "run_meta.json", _manifest(
        "contraction", {}, {"n": n, "dt": dt, "seed": seed, "horizon": horizon}, t0))
    return verdict


def run_scenario(name: str, out_dir: str | Path, **overrides) -> dict:
    if name == "prototype":
        return run_prototype(out_dir, **overrides)
    if name == "battery":
        return run_battery(out_dir, **overrides)
    if name == "rate_sweep":
        return run_rate_sweep(out_dir, **overrides)
    if name == "duality":
        return run_duality(out_dir, **overrides)
    if name == "contraction":
        return run_contraction(out_dir, **overrides)
    raise ValueError(f"unknown scenario: {name!r}; choose from {SCENARIOS}")


# ---------------------------------------------------------------------------
# analysis of written outputs
# ---------------------------------------------------------------------------

def analyze(run_dirs: list[str | Path], pde_dir: str | Path | None,
            out_dir: str | Path) -> dict:
    """Compare written particle runs against a written density run.

    Groups run directories by particle count (from ``diagnostics.csv`` row
    counts and directory metadata), emits ``rate_table.csv`` and
    ``bv_report.csv``, and re-derives pass/fail verdicts.  Snapshot grids of
    all inputs must agree.
    """
    from .io import read_density_run, read_run_marginals

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for rd in run_dirs:
        times, margs = read_run_marginals(rd)
        _, diag = read_csv(Path(rd) / "diagnostics.csv")
        runs.append({"dir": str(rd), "times": times, "marginals": margs,
                     "n": margs[0].size, "k_tv_mean": diag[-1, 2], "k_tv_max": diag[-1, 3]})
    base_times = runs[0]["times"]
    for r in runs[1:]:
        if r["times"].size != base_times.size or not np.allclose(r["times"], base_times, atol=1e-9):
            raise ValueError(f"snapshot grid of {r['dir']} does not match the first run")

    verdicts: dict[str, object] = {}
    if pde_dir is not None:
        pde = read_density_run(pde_dir)
        pde_times = np.array([g.t for g in pde])
        if pde_times.size != base_times.size or not np.allclose(pde_times, base_times, atol=1e-9):
            raise ValueError("density snapshot grid does not match the particle runs")
        by_n: dict[int, list[float]] = {}
        for r in runs:
            sup = max(w2_empirical_density(m, g) for m, g in zip(r["marginals"], pde))
            by_n.setdefault(r["n"], []).append(sup)
        ns = sorted(by_n)
        rows = [(n, float(np.median(by_n[n])), len(by_n[n])) for n in ns]
        write_csv(out / "rate_table.csv", ["n", "median_sup_w2", "seeds"], rows)
        if len(ns) > 1:
            meds = [m for _, m, _ in rows]
            verdicts["w2_strictly_decreasing"] = bool(all(b < a for a, b in zip(meds, meds[1:])))
        verdicts["sup_w2_worst"] = float(max(max(v) for v in by_n.values()))

    bv_by_n: dict[int, list[tuple[float, float]]] = {}
    for r in runs:
        bv_by_n.setdefault(r["n"], []).append((float(r["k_tv_mean"]), float(r["k_tv_max"])))
    bv_rows = []
    for n in sorted(bv_by_n):
        means = [a for a, _ in bv_by_n[n]]
        maxes = [b for _, b in bv_by_n[n]]
        bv_rows.append((n, float(np.mean(means)), float(np.mean(maxes)), len(means)))
    write_csv(out / "bv_report.csv", ["n", "k_tv_mean_avg", "k_tv_max_avg", "seeds"], bv_rows)
    if len(bv_rows) > 1:
        m_avg = [r[1] for r in bv_rows]
        x_avg = [r[2] for r in bv_rows]
        verdicts["bv_mean_factor"] = float(max(m_avg) / max(min(m_avg), 1e-300))
        verdicts["bv_max_factor"] = float(max(x_avg) / max(min(x_avg), 1e-300))
        verdicts["bv_mean_within_2x"] = bool(verdicts["bv_mean_factor"] <= 2.0)
        verdicts["bv_max_within_3x"] = bool(verdicts["bv_max_factor"] <= 3.0)

    write_json(out / "report.json", {"scenario": "analyze", "verdicts": verdicts})
    return verdicts


# ---------------------------------------------------------------------------
# report aggregation
# ---------------------------------------------------------------------------

def _recheck_rate_table(path: Path) -> dict[str, bool]:
    header, data = read_csv(path)
    med = data[:, header.index("median_sup_w2")]
    out = {}
    if med.size > 1:
        out["rate_table_decreasing"] = bool(np.all(np.diff(med) < 0.0))
    return out


def _recheck_contraction(path: Path) -> dict[str, bool]:
    header, data = read_csv(path)
    # the drift label column may be non-numeric; reload defensively
    rows = []
    with open(path) as f:
        f.readline()
        for line in f:
            drift, t, c = line.strip().split(",")
            rows.append((drift, float(t), float(c)))
    out = {}
    zero = np.array([c for d, _, c in rows if d == "zero"])
    if zero.size:
        allowance = 1e-12 * max(zero[0], 1e-30)
        out["contraction_zero_monotone"] = bool(np.all(np.diff(zero) <= allowance))
    return out


def _recheck_duality(path: Path) -> dict[str, bool]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        i_diff, i_se = header.index("abs_diff"), header.index("mc_se")
        ok = True
        for line in f:
            parts = line.strip().split(",")
            ok = ok and float(parts[i_diff]) <= 3.0 * float(parts[i_se])
    return {"duality_within_3se": ok}


def _recheck_bv(path: Path) -> dict[str, bool]:
    header, data = read_csv(path)
    out = {}
    if data.shape[0] > 1:
        m_avg = data[:, header.index("k_tv_mean_avg")]
        x_avg = data[:, header.index("k_tv_max_avg")]
        out["bv_mean_within_2x"] = bool(np.max(m_avg) <= 2.0 * np.min(m_avg))
        out["bv_max_within_3x"] = bool(np.max(x_avg) <= 3.0 * np.min(x_avg))
    return out


def emit_report(result_dir: str | Path) -> tuple[str, int]:
    """Aggregate verdicts under ``result_dir``; re-derive checks from CSVs.

    Returns the rendered report text and an exit code: 0 when every verdict
    passes, 1 otherwise.  Raises ``FileNotFoundError`` when the directory
    holds no analyzer outputs at all.
    """
    root = Path(result_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")

    verdicts: dict[str, object] = {}
    found = False
    for rp in sorted(root.rglob("report.json")):
        found = True
        payload = read_json(rp)
        prefix = payload.get("scenario", rp.parent.name)
        for k, v in payload.get("verdicts", {}).items():
            verdicts[f"{prefix}.{k}"] = v
    for path, checker in (
        ("rate_table.csv", _recheck_rate_table),
        ("contraction.csv", _recheck_contraction),
        ("duality.csv", _recheck_duality),
        ("bv_report.csv", _recheck_bv),
    ):
        for p in sorted(root.rglob(path)):
            for k, v in checker(p).items():
                verdicts[f"{p.parent.name}.{k}"] = v
    if not found and not verdicts:
        raise FileNotFoundError(f"no analyzer outputs found under {root}")

    lines = []
    exit_code = 0
    for name in sorted(verdicts):
        v = verdicts[name]
        if isinstance(v, bool):
            lines.append(f"{'PASS' if v else 'FAIL'}  {name}")
            if not v:
                exit_code = 1
        else:
            lines.append(f"info  {name} = {v}")
    return "\n".join(lines), exit_code
