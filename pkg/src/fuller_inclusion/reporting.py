"""Trajectory CSV and JSON report writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .lyapunov import QlfParams, wbar_array

CSV_HEADER = ("t", "x", "y", "u", "arc_index", "wbar")


def fmt(v: float) -> str:
    return "%.17g" % v


def trajectory_rows(traj, params: QlfParams | None = None, sample_step: float | None = None) -> list[tuple]:
    """Rows at every arc start and at the end (optionally also on a uniform grid)."""
    times = traj.breakpoints()
    if traj.duration == 0:
        times = times[:1]
    if sample_step:
        times = np.union1d(times, traj.sample_times(sample_step))
    idx = traj.arc_index(times)
    # the final breakpoint belongs to the last arc
    states = traj.states(times)
    controls = np.array([traj.arcs[i].u for i in idx])
    w: list[str] = [""] * times.size
    if params is not None:
        inside = np.hypot(states[:, 0], states[:, 1]) < params.r
        if np.any(inside):
            vals = wbar_array(states[inside, 0], states[inside, 1], params)
            for j, v in zip(np.nonzero(inside)[0], vals):
                w[j] = fmt(float(v))
    return [
        (fmt(float(t)), fmt(float(s[0])), fmt(float(s[1])), fmt(float(u)), str(int(i)), wv)
        for t, s, u, i, wv in zip(times, states, controls, idx, w)
    ]


def write_trajectory_csv(path: Path, traj, params: QlfParams | None = None, sample_step: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(trajectory_rows(traj, params, sample_step))
    return path


def read_trajectory_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def check_entries(checks: Iterable) -> list[dict]:
    out = []
    for c in checks:
        d = c.to_dict()
        out.append({k: d[k] for k in ("name", "grid_n", "worst", "threshold", "pass")})
    return out


def make_report(version: str, config: dict, checks: Iterable, summary: dict) -> dict:
    return _clean({"tool_version": version, "config": config, "checks": check_entries(checks), "summary": summary})


def write_json(path: Path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=False) + "\n")
    return path
