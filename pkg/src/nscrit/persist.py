"""Run directories: snapshots, CSV series and JSON manifests.

All floats are written with ``repr`` so reruns reproduce files byte-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mild import NormSeries, Trajectory
from .snapshot import SnapshotError, read_snapshot, write_snapshot
from .spectral import SpectralVelocity

__all__ = [
    "format_value",
    "write_csv",
    "write_json",
    "write_norms_csv",
    "save_trajectory",
    "load_trajectory",
]

SNAPSHOT_DIR = "snapshots"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable) -> None:
    """Header row then one line per row; rows are mappings or sequences."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([format_value(v) for v in vals])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_norms_csv(path, series: NormSeries) -> None:
    write_csv(path, NormSeries.COLUMNS, series.rows())


def save_trajectory(out_dir, traj: Trajectory) -> list[str]:
    d = Path(out_dir) / SNAPSHOT_DIR
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, t in enumerate(traj.times):
        name = f"snap_{i:06d}.nssf"
        write_snapshot(d / name, traj[i], float(t))
        names.append(name)
    return names


def load_trajectory(run_dir, dealias_fraction: float = 2.0 / 3.0) -> Trajectory:
    """Read every snapshot of a run directory, in file-name order."""
    run_dir = Path(run_dir)
    d = run_dir / SNAPSHOT_DIR if (run_dir / SNAPSHOT_DIR).is_dir() else run_dir
    files = sorted(d.glob("*.nssf"))
    if not files:
        raise SnapshotError(f"no snapshot files in {d}")
    fields, times = [], []
    for f in files:
        field, t = read_snapshot(f, dealias_fraction)
        if not isinstance(field, SpectralVelocity):
            raise SnapshotError(f"{f}: expected a velocity snapshot")
        fields.append(field)
        times.append(t)
    if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
        raise SnapshotError(f"snapshot times in {d} must start at 0 and increase")
    return Trajectory.from_fields(times, fields, {"source": str(d)})
