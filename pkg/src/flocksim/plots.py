"""Hand-rolled SVG plots: top-down trajectories over obstacle footprints
and D(t)/C(t) time series.

No rendering dependency; output bytes are a pure function of the input
record (fixed palette, fixed float formatting), so plots are diffable in
tests.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import RunRecord
from .geometry import Box, Cylinder, Sphere
from .metrics import cosine_series, dispersion_series
from .world import ObstacleSet

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def _fmt(x: float) -> str:
    return f"{x:.3f}"


class _Svg:
    def __init__(self, width: float, height: float):
        self.w = width
        self.h = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
            f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
            f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        ]

    def rect(self, x, y, w, h, fill, stroke="none", opacity=1.0):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" stroke="{stroke}" opacity="{_fmt(opacity)}"/>'
        )

    def circle(self, cx, cy, r, fill, stroke="none", opacity=1.0):
        self.parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" fill="{fill}" '
            f'stroke="{stroke}" opacity="{_fmt(opacity)}"/>'
        )

    def polyline(self, pts: Sequence[tuple], stroke: str, width: float = 1.0, opacity=1.0):
        if len(pts) < 2:
            return
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}" opacity="{_fmt(opacity)}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1.0):
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", color="#333333"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="monospace" '
            f'font-size="{size}" text-anchor="{anchor}" fill="{color}">{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _world_mapper(bounds: Box, canvas_w: float, canvas_h: float, margin: float):
    sx = (canvas_w - 2 * margin) / (bounds.hi[0] - bounds.lo[0])
    sy = (canvas_h - 2 * margin) / (bounds.hi[1] - bounds.lo[1])
    s = min(sx, sy)

    def to_px(x: float, y: float) -> tuple:
        px = margin + (x - bounds.lo[0]) * s
        py = canvas_h - margin - (y - bounds.lo[1]) * s
        return px, py

    return to_px, s


def _draw_obstacles(svg: _Svg, obstacles: ObstacleSet, to_px, scale: float) -> None:
    for prim in obstacles.primitives:
        if isinstance(prim, Box):
            x0, y0 = to_px(prim.lo[0], prim.hi[1])
            svg.rect(x0, y0, (prim.hi[0] - prim.lo[0]) * scale,
                     (prim.hi[1] - prim.lo[1]) * scale, fill="#aaaaaa", stroke="#666666")
        elif isinstance(prim, Cylinder):
            cx, cy = to_px(prim.cx, prim.cy)
            svg.circle(cx, cy, prim.radius * scale, fill="#8a6a4a", stroke="#5a4a3a")
        elif isinstance(prim, Sphere):
            cx, cy = to_px(prim.center[0], prim.center[1])
            svg.circle(cx, cy, prim.radius * scale, fill="#7fae7f", stroke="none", opacity=0.45)


def trajectory_svg(record: RunRecord, obstacles: ObstacleSet) -> str:
    """Top-down XY paths of all agents with obstacle footprints."""
    if record.positions.shape[0] < 1:
        raise ValueError("nothing to plot: empty record")
    w, h, margin = 720.0, 480.0, 30.0
    svg = _Svg(w, h)
    to_px, s = _world_mapper(obstacles.bounds, w, h, margin)
    _draw_obstacles(svg, obstacles, to_px, s)
    m = record.positions.shape[1]
    for a in range(m):
        color = _PALETTE[a % len(_PALETTE)]
        pts = [to_px(p[0], p[1]) for p in record.positions[:, a, :]]
        svg.polyline(pts, stroke=color, width=1.2, opacity=0.9)
        svg.circle(*to_px(*record.positions[0, a, :2]), 3.0, fill=color)
        svg.circle(*to_px(*record.positions[-1, a, :2]), 3.0, fill="none", stroke=color)
    gx, gy = to_px(record.goal[0], record.goal[1])
    svg.circle(gx, gy, 5.0, fill="none", stroke="#d62728")
    svg.line(gx - 6, gy, gx + 6, gy, stroke="#d62728")
    svg.line(gx, gy - 6, gx, gy + 6, stroke="#d62728")
    svg.text(margin, 18, f"run {record.run_id} [{record.controller}] outcome={record.outcome}")
    return svg.render()


def _series_panel(svg: _Svg, x0, y0, w, h, t, values, label, color, y_range):
    svg.rect(x0, y0, w, h, fill="none", stroke="#999999")
    lo, hi = y_range
    pts = []
    for ti, vi in zip(t, values):
        if not math.isfinite(vi):
            continue
        px = x0 + (ti / max(t[-1], 1e-9)) * w
        py = y0 + h - (min(max(vi, lo), hi) - lo) / (hi - lo) * h
        pts.append((px, py))
    svg.polyline(pts, stroke=color, width=1.2)
    svg.text(x0 + 4, y0 + 13, label)
    svg.text(x0 - 4, y0 + h + 4, f"{lo:g}", anchor="end")
    svg.text(x0 - 4, y0 + 10, f"{hi:g}", anchor="end")


def metrics_svg(record: RunRecord) -> str:
    """D(t) and C(t) panels over episode time."""
    if record.positions.shape[0] < 2:
        raise ValueError("nothing to plot: record has no steps")
    d = dispersion_series(record)
    c = cosine_series(record)
    t = np.arange(len(d)) * record.dt
    w, h = 720.0, 360.0
    svg = _Svg(w, h)
    d_hi = max(1.0, float(np.ceil(np.nanmax(d))))
    _series_panel(svg, 60, 20, w - 90, 140, t, d, "dispersion D(t) [m]", "#1f77b4", (0.0, d_hi))
    _series_panel(svg, 60, 190, w - 90, 140, t, c, "cosine similarity C(t)", "#2ca02c", (-1.0, 1.0))
    svg.text(60, h - 8, f"t in [0, {t[-1]:.1f}] s, run {record.run_id} [{record.controller}]")
    return svg.render()


def batch_centroids_svg(records: Sequence[RunRecord], obstacles: ObstacleSet) -> str:
    """Overlay of per-run centroid paths for a batch."""
    if not records:
        raise ValueError("nothing to plot: empty batch")
    w, h, margin = 720.0, 480.0, 30.0
    svg = _Svg(w, h)
    to_px, s = _world_mapper(obstacles.bounds, w, h, margin)
    _draw_obstacles(svg, obstacles, to_px, s)
    for i, rec in enumerate(records):
        color = _PALETTE[i % len(_PALETTE)]
        centroids = rec.positions.mean(axis=1)
        svg.polyline([to_px(p[0], p[1]) for p in centroids], stroke=color, width=1.2, opacity=0.8)
    svg.text(margin, 18, f"{len(records)} run centroids [{records[0].controller}]")
    return svg.render()


def write_run_plots(record: RunRecord, obstacles: ObstacleSet, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}_trajectory.svg").write_text(trajectory_svg(record, obstacles), encoding="utf-8")
    (out_dir / f"{stem}_metrics.svg").write_text(metrics_svg(record), encoding="utf-8")
