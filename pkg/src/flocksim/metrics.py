"""Flock-quality metrics over recorded runs.

Three per-run quantities:

  dispersion D(t)         mean distance of agents from their centroid
  cosine similarity C(t)  mean alignment of agent velocities with the
                          flock's mean velocity; undefined (NaN) while the
                          mean velocity is degenerate
  average speed AV        centroid displacement from start to the last
                          instant everyone was still outside the goal's
                          3 m proximity, divided by the episode duration

Batch summaries report mean and sample standard deviation over runs,
averaging D and C over their defined timesteps within each run first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import RunRecord

#: Speed below which an agent is excluded from the alignment metric.
SPEED_EPS = 1e-6
#: Goal proximity that ends the AV displacement window.
GOAL_PROXIMITY_M = 3.0


@dataclass(frozen=True)
class MetricSeries:
    run_id: int
    controller: str
    dispersion: np.ndarray        # (T+1,)
    cosine: np.ndarray            # (T+1,), NaN where undefined
    average_speed: float
    av_truncated: bool            # True when the run never reached the goal
    min_interagent: float
    min_obstacle: float
    outcome: str


@dataclass(frozen=True)
class BatchSummary:
    controller: str
    runs: int
    success_rate: float
    d_mean: float
    d_std: float
    c_mean: float
    c_std: float
    av_mean: float
    av_std: float
    min_interagent_mean: float
    min_obstacle_mean: float

    def as_dict(self) -> dict:
        return {
            "controller": self.controller,
            "runs": self.runs,
            "success_rate": self.success_rate,
            "D_mean": self.d_mean,
            "D_std": self.d_std,
            "C_mean": self.c_mean,
            "C_std": self.c_std,
            "AV_mean": self.av_mean,
            "AV_std": self.av_std,
            "min_interagent_mean": self.min_interagent_mean,
            "min_obstacle_mean": self.min_obstacle_mean,
        }


def dispersion(positions: np.ndarray) -> float:
    """Mean distance from the centroid for one snapshot (M, 3)."""
    centroid = positions.mean(axis=0)
    return float(np.linalg.norm(positions - centroid, axis=1).mean())


def cosine_similarity(velocities: np.ndarray, eps: float = SPEED_EPS) -> float:
    """Mean alignment of velocities with their mean; NaN when degenerate.

    Agents slower than eps are skipped; the result is NaN when the mean
    velocity is itself degenerate or no agent is moving.
    """
    mean_v = velocities.mean(axis=0)
    mean_norm = np.linalg.norm(mean_v)
    if mean_norm < eps:
        return math.nan
    speeds = np.linalg.norm(velocities, axis=1)
    moving = speeds >= eps
    if not moving.any():
        return math.nan
    cos = (velocities[moving] @ mean_v) / (speeds[moving] * mean_norm)
    return float(cos.mean())


def dispersion_series(record: RunRecord) -> np.ndarray:
    centroids = record.positions.mean(axis=1, keepdims=True)
    return np.linalg.norm(record.positions - centroids, axis=2).mean(axis=1)


def cosine_series(record: RunRecord) -> np.ndarray:
    return np.array([cosine_similarity(v) for v in record.velocities])


def proximity_cutoff_step(record: RunRecord) -> int:
    """Last step index at which every agent is still >= 3 m from the goal."""
    d = np.linalg.norm(record.positions - record.goal, axis=2)
    all_far = np.all(d >= GOAL_PROXIMITY_M, axis=1)
    idx = np.nonzero(all_far)[0]
    return int(idx[-1]) if idx.size else 0


def average_speed(record: RunRecord) -> tuple[float, bool]:
    """(AV, truncated): displacement over the 3 m proximity window divided
    by total episode time; truncated marks runs that never arrived."""
    t_idx = proximity_cutoff_step(record)
    c0 = record.positions[0].mean(axis=0)
    cT = record.positions[t_idx].mean(axis=0)
    total_time = record.duration
    if total_time <= 0:
        return 0.0, record.outcome != "success"
    return float(np.linalg.norm(c0 - cT) / total_time), record.outcome != "success"


def evaluate_run(record: RunRecord) -> MetricSeries:
    av, truncated = average_speed(record)
    return MetricSeries(
        run_id=record.run_id,
        controller=record.controller,
        dispersion=dispersion_series(record),
        cosine=cosine_series(record),
        average_speed=av,
        av_truncated=truncated,
        min_interagent=record.min_interagent,
        min_obstacle=record.min_obstacle,
        outcome=record.outcome,
    )


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in values if math.isfinite(v)], dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1))


def summarize(series: Sequence[MetricSeries], controller: Optional[str] = None) -> BatchSummary:
    """Aggregate per-run metrics into mean +/- sample std over runs."""
    if not series:
        raise ValueError("summarize requires at least one run")
    series = sorted(series, key=lambda s: s.run_id)  # permutation-invariant
    if controller is None:
        controller = series[0].controller
    d_runs = [float(np.nanmean(s.dispersion)) for s in series]
    c_runs = [float(np.nanmean(s.cosine)) if np.isfinite(s.cosine).any() else math.nan for s in series]
    av_runs = [s.average_speed for s in series]
    d_mean, d_std = _mean_std(d_runs)
    c_mean, c_std = _mean_std(c_runs)
    av_mean, av_std = _mean_std(av_runs)
    mi_mean, _ = _mean_std([s.min_interagent for s in series])
    mo_mean, _ = _mean_std([s.min_obstacle for s in series])
    succ = sum(1 for s in series if s.outcome == "success") / len(series)
    return BatchSummary(
        controller=controller,
        runs=len(series),
        success_rate=succ,
        d_mean=d_mean,
        d_std=d_std,
        c_mean=c_mean,
        c_std=c_std,
        av_mean=av_mean,
        av_std=av_std,
        min_interagent_mean=mi_mean,
        min_obstacle_mean=mo_mean,
    )


def smoothed_min_cosine(series: MetricSeries, window_s: float, dt: float) -> float:
    """Trough of C(t) after a moving-average smooth (NaN-aware).

    A short smoothing window suppresses single-step flicker so the trough
    reflects a sustained alignment drop.
    """
    c = series.cosine
    w = max(1, int(round(window_s / dt)))
    vals = []
    for k in range(len(c) - w + 1):
        chunk = c[k:k + w]
        if np.isfinite(chunk).any():
            vals.append(float(np.nanmean(chunk)))
    return min(vals) if vals else math.nan
