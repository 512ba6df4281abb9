"""Evaluation series, trapezoidal AUC, and group-normalized AUC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METRIC_COLUMNS = (
    "return", "length", "dv_usage", "fuel_reward", "inspect_reward", "rta_steps", "outcome",
)
CSV_HEADER = ("step", "seed", "episode") + METRIC_COLUMNS


@dataclass
class EvalSeries:
    """Per-checkpoint evaluation metrics with the raw per-episode values.

    raw[metric] has shape (n_checkpoints, n_samples) where a sample is one
    (seed, episode) evaluation; means and stds are recomputed from raw, never
    stored independently.
    """

    steps: np.ndarray
    raw: dict

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.float64)
        if self.steps.ndim != 1 or np.any(np.diff(self.steps) <= 0):
            raise ValueError("checkpoint steps must be strictly increasing")

    def mean(self, metric: str) -> np.ndarray:
        return self.raw[metric].mean(axis=1)

    def std(self, metric: str) -> np.ndarray:
        return self.raw[metric].std(axis=1, ddof=0)

    def n_samples(self) -> int:
        return next(iter(self.raw.values())).shape[1]


def trapezoid_auc(series) -> float:
    """Trapezoidal-rule area under a list of (x, y) points.

    Requires at least two points with strictly increasing x.
    """
    pts = list(series)
    if len(pts) < 2:
        raise ValueError("need at least two points for a trapezoid AUC")
    x = np.asarray([p[0] for p in pts], dtype=np.float64)
    y = np.asarray([p[1] for p in pts], dtype=np.float64)
    if np.any(np.diff(x) <= 0):
        raise ValueError("x values must be strictly increasing")
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


def normalized_auc(group: dict, metric: str, mode: str = "minmax") -> dict:
    """Normalize each member's AUC for a metric within the group.

    mode="minmax" maps the best (smallest) AUC to 0.00 and the worst to 1.00;
    mode="max" divides by the group maximum so the worst is exactly 1.00 and
    ties share it. A group with no spread yields all zeros under minmax and
    all ones under max.
    """
    if not group:
        raise ValueError("normalized_auc needs a non-empty group")
    aucs = {
        name: trapezoid_auc(zip(series.steps, series.mean(metric)))
        for name, series in group.items()
    }
    values = np.array(list(aucs.values()))
    hi = values.max()
    lo = values.min()
    if mode == "max":
        if hi == 0.0:
            return {name: 1.0 for name in aucs}
        return {name: auc / hi for name, auc in aucs.items()}
    if mode == "minmax":
        if hi == lo:
            return {name: 0.0 for name in aucs}
        return {name: (auc - lo) / (hi - lo) for name, auc in aucs.items()}
    raise ValueError(f"unknown normalization mode {mode!r}")


def write_metrics_csv(path, rows):
    """Write raw evaluation rows; floats keep full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def read_metrics_csv(path):
    """Read raw rows back as a list of dicts with numeric values."""
    out = []
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            row = {"step": int(rec["step"]), "seed": int(rec["seed"]),
                   "episode": int(rec["episode"])}
            for col in METRIC_COLUMNS:
                row[col] = float(rec[col])
            out.append(row)
    return out


def series_from_rows(rows, per_seed: bool = False) -> EvalSeries:
    """Group raw rows by checkpoint into an EvalSeries.

    per_seed=True first averages episodes within each seed, so a sample is a
    seed mean rather than a (seed, episode) pair.
    """
    if not rows:
        raise ValueError("no evaluation rows")
    steps = sorted({r["step"] for r in rows})
    raw = {}
    for metric in METRIC_COLUMNS:
        per_step = []
        for step in steps:
            vals = [r for r in rows if r["step"] == step]
            if per_seed:
                seeds = sorted({r["seed"] for r in vals})
                samples = [
                    float(np.mean([r[metric] for r in vals if r["seed"] == s])) for s in seeds
                ]
            else:
                samples = [r[metric] for r in sorted(vals, key=lambda r: (r["seed"], r["episode"]))]
            per_step.append(samples)
        lengths = {len(s) for s in per_step}
        if len(lengths) != 1:
            raise ValueError("checkpoints have differing sample counts")
        raw[metric] = np.array(per_step)
    return EvalSeries(steps=np.array(steps, dtype=np.float64), raw=raw)


def load_series(run_dir, per_seed: bool = False) -> EvalSeries:
    return series_from_rows(read_metrics_csv(Path(run_dir) / "metrics.csv"), per_seed=per_seed)
