"""File formats: CSV tables and JSON manifests.

All CSVs use comma separators, ``.`` decimals, LF line endings and a single
header line; floats are written with ``%.17g`` so values round-trip exactly
and reruns of the same manifest produce byte-identical files.  Writes go to
a temporary file in the target directory followed by an atomic replace.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fpe import DensityGrid
from .particles import RunRecord


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    tmp = path.with_name(f".tmp-{path.name}")
    with open(tmp, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data


def write_json(path: str | Path, obj: dict) -> None:
    path = Path(path)
    tmp = path.with_name(f".tmp-{path.name}")
    with open(tmp, "w", newline="") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def read_json(path: str | Path) -> dict:
    with open(path) as f:
        return json.load(f)


def _time_tag(t: float) -> str:
    return f"{t:.6f}"


# ---------------------------------------------------------------------------
# particle run outputs
# ---------------------------------------------------------------------------

def write_run(out_dir: str | Path, record: RunRecord) -> None:
    """Write ``marginals_<t>.csv`` per snapshot plus ``diagnostics.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, marg in zip(record.snapshot_times, record.marginals):
        write_csv(out / f"marginals_{_time_tag(t)}.csv", ["x"], ((v,) for v in marg))

    # constraint residual per snapshot: worst step since the previous one
    steps = record.meta.get("steps_per_interval", [])
    bounds = np.concatenate(([0], np.cumsum(steps))).astype(int)
    resid = record.residual_per_step
    res_rows = []
    offset = 1 if record.snapshot_times.size == len(steps) + 1 else 0
    for i, t in enumerate(record.snapshot_times):
        if offset and i == 0:
            r = 0.0
        else:
            j = i - offset
            seg = resid[bounds[j]:bounds[j + 1]] if j + 1 < bounds.size else resid[bounds[j]:]
            r = float(np.max(seg)) if seg.size else 0.0
        res_rows.append(r)
    write_csv(
        out / "diagnostics.csv",
        ["time", "big_k", "k_tv_mean", "k_tv_max", "constraint_residual"],
        [
            (t, record.k_path[i], record.k_tv_mean[i], record.k_tv_max[i], res_rows[i])
            for i, t in enumerate(record.snapshot_times)
        ],
    )


def read_run_marginals(run_dir: str | Path) -> tuple[np.ndarray, list[np.ndarray]]:
    """Load snapshot times and sorted marginals written by :func:`write_run`."""
    run_dir = Path(run_dir)
    pairs = []
    for p in run_dir.glob("marginals_*.csv"):
        t = float(p.stem.split("_", 1)[1])
        _, data = read_csv(p)
        pairs.append((t, data[:, 0]))
    if not pairs:
        raise FileNotFoundError(f"no marginals_*.csv in {run_dir}")
    pairs.sort(key=lambda kv: kv[0])
    return np.array([t for t, _ in pairs]), [m for _, m in pairs]


# ---------------------------------------------------------------------------
# density outputs
# ---------------------------------------------------------------------------

def write_density_run(out_dir: str | Path, snaps: list[DensityGrid], diag: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for g in snaps:
        write_csv(out / f"density_{_time_tag(g.t)}.csv", ["x", "u"], zip(g.centers, g.u))
    cols = list(diag.keys())
    write_csv(out / "fpe_diagnostics.csv", cols, zip(*(diag[c] for c in cols)))


def read_density_run(out_dir: str | Path) -> list[DensityGrid]:
    out = Path(out_dir)
    snaps = []
    for p in out.glob("density_*.csv"):
        t = float(p.stem.split("_", 1)[1])
        _, data = read_csv(p)
        snaps.append(DensityGrid(u=data[:, 1], t=t))
    if not snaps:
        raise FileNotFoundError(f"no density_*.csv in {out}")
    snaps.sort(key=lambda g: g.t)
    return snaps
