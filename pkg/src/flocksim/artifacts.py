"""Deterministic on-disk artifacts for runs and batches.

Trajectory CSV (one row per agent per step):
  run_id,t,agent_id,x,y,z,vx,vy,vz,w1x,w1y,w1z,w2x,w2y,w2z,w3x,w3y,w3z,
  w4x,w4y,w4z,goal_visible
Absent virtual agents serialize as empty fields. Floats use shortest
round-trip repr, so identical runs produce byte-identical files.

Per-run JSON carries the outcome, metrics, and minimum distances; batch
JSON carries the summary keys used by the comparison table.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .engine import RunRecord
from .metrics import BatchSummary, MetricSeries, evaluate_run

CSV_HEADER = (
    "run_id,t,agent_id,x,y,z,vx,vy,vz,"
    "w1x,w1y,w1z,w2x,w2y,w2z,w3x,w3y,w3z,w4x,w4y,w4z,goal_visible"
)


def _f(x: float) -> str:
    """Shortest round-trip decimal form; empty for NaN (absent values)."""
    if math.isnan(x):
        return ""
    return repr(float(x))


def record_to_csv(record: RunRecord) -> str:
    lines = [CSV_HEADER]
    n_steps, m = record.positions.shape[0], record.positions.shape[1]
    for step in range(n_steps):
        t = step * record.dt
        for a in range(m):
            p = record.positions[step, a]
            v = record.velocities[step, a]
            fields = [str(record.run_id), _f(t), str(a)]
            fields += [_f(c) for c in p]
            fields += [_f(c) for c in v]
            for w in (record.w1, record.w2, record.w3, record.w4):
                fields += [_f(c) for c in w[step, a]]
            fields.append("1" if record.goal_visible[step, a] else "0")
            lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def record_summary(record: RunRecord, series: MetricSeries | None = None) -> dict:
    if series is None:
        series = evaluate_run(record)
    return {
        "run_id": record.run_id,
        "controller": record.controller,
        "outcome": record.outcome,
        "duration_s": record.duration,
        "arrival_time_s": record.arrival_time,
        "goal": [float(c) for c in record.goal],
        "D_mean": float(np.nanmean(series.dispersion)),
        "C_mean": (
            float(np.nanmean(series.cosine)) if np.isfinite(series.cosine).any() else None
        ),
        "AV": series.average_speed,
        "AV_truncated": series.av_truncated,
        "min_interagent": record.min_interagent,
        "min_obstacle": (
            record.min_obstacle if math.isfinite(record.min_obstacle) else None
        ),
        "collision_events": sum(
            1 for e in record.events if e["kind"].startswith("collision")
        ),
    }


def dump_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_run_artifacts(record: RunRecord, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.csv").write_text(record_to_csv(record), encoding="utf-8")
    (out_dir / f"{stem}.json").write_text(
        dump_json(record_summary(record)), encoding="utf-8"
    )


def load_record_csv(path: Path) -> RunRecord:
    """Rebuild a RunRecord from a trajectory CSV (events are not stored in
    the CSV, so the reloaded record carries outcome 'unknown')."""
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} is not a trajectory CSV")
    rows = [line.split(",") for line in lines[1:]]
    run_id = int(rows[0][0])
    agents = sorted({int(r[2]) for r in rows})
    m = len(agents)
    n_rows = len(rows) // m
    ts = sorted({float(r[1]) for r in rows})
    dt = ts[1] - ts[0] if len(ts) > 1 else 1.0 / 30.0

    def parse(v: str) -> float:
        return float(v) if v else math.nan

    shape = (n_rows, m, 3)
    pos = np.full(shape, np.nan)
    vel = np.full(shape, np.nan)
    ws = {k: np.full(shape, np.nan) for k in ("w1", "w2", "w3", "w4")}
    vis = np.zeros((n_rows, m), dtype=bool)
    for k, r in enumerate(rows):
        step, a = k // m, int(r[2])
        pos[step, a] = [parse(v) for v in r[3:6]]
        vel[step, a] = [parse(v) for v in r[6:9]]
        ws["w1"][step, a] = [parse(v) for v in r[9:12]]
        ws["w2"][step, a] = [parse(v) for v in r[12:15]]
        ws["w3"][step, a] = [parse(v) for v in r[15:18]]
        ws["w4"][step, a] = [parse(v) for v in r[18:21]]
        vis[step, a] = r[21] == "1"
    return RunRecord(
        run_id=run_id,
        controller="unknown",
        dt=dt,
        goal=np.full(3, np.nan),
        positions=pos,
        velocities=vel,
        w1=ws["w1"],
        w2=ws["w2"],
        w3=ws["w3"],
        w4=ws["w4"],
        goal_visible=vis,
        events=[],
        outcome="unknown",
        min_interagent=math.nan,
        min_obstacle=math.nan,
        arrival_time=None,
    )


def comparison_table(summaries: list[BatchSummary]) -> str:
    """Metrics-by-controller table (mean +/- std), markdown layout."""
    headers = ["Metric"] + [s.controller for s in summaries]
    rows = [
        ("D", [(s.d_mean, s.d_std) for s in summaries]),
        ("CS", [(s.c_mean, s.c_std) for s in summaries]),
        ("AV", [(s.av_mean, s.av_std) for s in summaries]),
    ]
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    for name, cells in rows:
        vals = [f"{m:.2f} +/- {s:.2f}" for m, s in cells]
        lines.append("| " + " | ".join([name] + vals) + " |")
    lines.append(
        "| success rate | "
        + " | ".join(f"{s.success_rate:.2f}" for s in summaries)
        + " |"
    )
    return "\n".join(lines) + "\n"
