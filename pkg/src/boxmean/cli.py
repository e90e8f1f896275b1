"""Command-line interface.

Subcommands mirror the library surface: ``simulate`` runs the particle
scheme from a JSON config, ``fpe`` runs the density solver, ``analyze``
compares written outputs, ``scenario`` runs a packaged experiment and
``report`` aggregates verdicts with a pass/fail exit code.  The
``SIM_THREADS`` environment variable caps scenario-level parallelism;
outputs are identical for every thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .fpe import solve_fpe, solve_neumann_fpe
from .io import write_density_run, write_json, write_run
from .model import ProblemSpec, validate_conditions
from .particles import simulate, simulate_coupled, simulate_no_interaction
from .scenarios import SCENARIOS, _manifest, analyze, emit_report, run_scenario


def _load_config(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _default_snapshots(horizon: float) -> np.ndarray:
    return np.linspace(0.0, horizon, 11)


def _cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    spec = ProblemSpec.from_config(cfg)
    report = validate_conditions(spec)
    if not report.passed:
        print("configuration fails condition validation:", file=sys.stderr)
        print(str(report), file=sys.stderr)
        return 2
    snaps = _parse_floats(args.snapshots) if args.snapshots else _default_snapshots(spec.horizon)
    out = Path(args.out)
    if args.coupled:
        n_list = _parse_ints(args.coupled)
        records = simulate_coupled(spec, n_list, args.dt, args.seed, snaps)
        for rec in records:
            write_run(out / f"n{rec.n}", rec)
        resid = max(rec.max_residual() for rec in records)
    elif args.no_interaction:
        rec = simulate_no_interaction(spec, args.n, args.dt, args.seed, snaps)
        write_run(out, rec)
        resid = 0.0
    else:
        rec = simulate(spec, args.n, args.dt, args.seed, snaps)
        write_run(out, rec)
        resid = rec.max_residual()
    meta = _manifest("simulate", cfg, {
        "n": args.n, "dt": args.dt, "seed": args.seed,
        "snapshots": [float(t) for t in snaps],
        "coupled": args.coupled or "", "no_interaction": bool(args.no_interaction),
    }, t0)
    meta["constraint_residual_max"] = resid
    write_json(out / "run_meta.json", meta)
    print(f"wrote {out} (max constraint residual {resid:.3e})")
    return 0


def _cmd_fpe(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    spec = ProblemSpec.from_config(cfg)
    snaps = _parse_floats(args.snapshots) if args.snapshots else _default_snapshots(spec.horizon)
    out = Path(args.out)
    if args.neumann:
        u0 = spec.initial.density_on_grid(args.cells)
        snapshots, diag = solve_neumann_fpe(
            lambda z: -spec.drift.mu_eps(z), spec.sigma, args.cells, args.dt, u0, snaps)
    else:
        snapshots, diag = solve_fpe(spec, args.cells, args.dt, snaps,
                                    moment_correct=args.moment_correct)
    write_density_run(out, snapshots, diag)
    meta = _manifest("fpe", cfg, {
        "cells": args.cells, "dt": args.dt, "neumann": bool(args.neumann),
        "moment_correct": bool(args.moment_correct),
        "snapshots": [float(t) for t in snaps],
    }, t0)
    write_json(out / "run_meta.json", meta)
    mass_drift = float(np.max(np.abs(np.asarray(diag["mass"]) - diag["mass"][0])))
    print(f"wrote {out} (mass drift {mass_drift:.3e})")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    report_path = Path(args.report)
    verdicts = analyze(args.runs, args.pde, report_path.parent)
    default = report_path.parent / "report.json"
    if report_path != default:
        default.replace(report_path)
    print(json.dumps(verdicts, indent=2, sort_keys=True))
    return 0


def _cmd_scenario(args: argparse.Namespace) -> int:
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.n_list is not None:
        overrides["n_list"] = tuple(_parse_ints(args.n_list))
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.cells is not None:
        overrides["cells"] = args.cells
    if args.fpe_dt is not None:
        overrides["fpe_dt"] = args.fpe_dt
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    verdicts = run_scenario(args.name, args.out, **overrides)
    print(json.dumps(verdicts, indent=2, sort_keys=True))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    text, code = emit_report(args.dir)
    print(text)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxmean", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run the constrained particle scheme")
    ps.add_argument("--config", required=True, help="JSON problem configuration")
    ps.add_argument("--n", type=int, default=1000)
    ps.add_argument("--dt", type=float, default=1e-3)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--snapshots", help="comma-separated snapshot times")
    ps.add_argument("--out", required=True)
    ps.add_argument("--coupled", help="comma-separated particle counts sharing noise")
    ps.add_argument("--no-interaction", action="store_true",
                    help="independent reflected particles, no mean constraint")
    ps.set_defaults(fn=_cmd_simulate)

    pf = sub.add_parser("fpe", help="run the density solver")
    pf.add_argument("--config", required=True)
    pf.add_argument("--cells", type=int, default=400)
    pf.add_argument("--dt", type=float, default=1e-4)
    pf.add_argument("--snapshots")
    pf.add_argument("--neumann", action="store_true",
                    help="unconstrained no-flux solve with drift -mu_eps")
    pf.add_argument("--moment-correct", action="store_true",
                    help="feedback correction pinning the moment each step")
    pf.add_argument("--out", required=True)
    pf.set_defaults(fn=_cmd_fpe)

    pa = sub.add_parser("analyze", help="compare written runs against a density run")
    pa.add_argument("--runs", nargs="+", required=True)
    pa.add_argument("--pde")
    pa.add_argument("--report", required=True, help="path for the verdict JSON")
    pa.set_defaults(fn=_cmd_analyze)

    pc = sub.add_parser("scenario", help="run a packaged experiment")
    pc.add_argument("name", choices=SCENARIOS)
    pc.add_argument("--out", required=True)
    pc.add_argument("--n", type=int)
    pc.add_argument("--n-list")
    pc.add_argument("--dt", type=float)
    pc.add_argument("--seed", type=int)
    pc.add_argument("--seeds", type=int)
    pc.add_argument("--cells", type=int)
    pc.add_argument("--fpe-dt", type=float)
    pc.add_argument("--horizon", type=float)
    pc.set_defaults(fn=_cmd_scenario)

    pr = sub.add_parser("report", help="aggregate verdicts; nonzero exit on failure")
    pr.add_argument("dir")
    pr.set_defaults(fn=_cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
