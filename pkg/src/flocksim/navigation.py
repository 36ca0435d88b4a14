"""Velocity-command control laws.

The desired velocity of an agent is the sum of three parts, clamped to the
maximum speed:

  goal term       bounded attraction toward the waypoint (or the goal when
                  it is in line of sight)
  neighbor terms  spring-like spacing regulation toward the reference
                  distance tau, with a dead zone of half-width beta; near
                  obstacles each term is stripped of its component along
                  the w4-w3 axis so cohesion can never push an agent into
                  an obstacle
  obstacle term   virtual agents w2 and w3/w4 repel the agent inside the
                  safety distance sigma_s

Two reference controllers share the pipeline: ``baseline`` pins the
waypoint to the goal and keeps only the w2 repulsion (no projection), and
``siphon`` adds to the baseline a pull from stuck agents toward the
nearest free agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Vec3, norm, vec3
from .perception import PerceptionOutput

#: Fallback repulsion axis for exactly coincident agents.
_COINCIDENT_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class NavGains:
    phi_n: float = 6.0        # inter-agent control gain
    phi_g: float = 6.0        # agent-goal control gain
    phi_o: float = 12.0       # agent-obstacle control gain
    tau: float = 3.0          # desired inter-agent distance (m)
    beta: float = 0.1         # spacing dead-zone half-width (m)
    sigma_s: float = 1.5      # obstacle safety distance (m)
    k_neighbors: int = 3      # neighbor count used by the spacing law
    phi_max: float = 2.0      # speed cap (m/s)
    phi_siphon: float = 6.0   # siphon pull gain (stuck agents only)

    def __post_init__(self):
        if min(self.phi_n, self.phi_g, self.phi_o, self.beta) < 0:
            raise ValueError("gains and beta must be >= 0")
        if self.tau <= 0 or self.sigma_s <= 0 or self.phi_max <= 0:
            raise ValueError("tau, sigma_s and phi_max must be > 0")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass(frozen=True)
class ControllerConfig:
    """Controller variant plus the obstacle-handling ablation switches."""

    variant: str = "goflock"   # goflock | baseline | siphon
    repel_w2: bool = True      # keep the w2 addend of the repulsion term
    repel_w3w4: bool = True    # keep the w4-w3 addend of the repulsion term
    projection: str = "w4w3"   # neighbor-term projection axis: w4w3 | iw2 | off

    def __post_init__(self):
        if self.variant not in ("goflock", "baseline", "siphon"):
            raise ValueError(f"unknown controller variant: {self.variant!r}")
        if self.projection not in ("w4w3", "iw2", "off"):
            raise ValueError(f"unknown projection mode: {self.projection!r}")


#: Ablation presets, keyed as in the obstacle-avoidance study.
ABLATION_MODES = {
    "no_avoidance": ControllerConfig(variant="goflock", repel_w2=False, repel_w3w4=False, projection="off"),
    "w2_only": ControllerConfig(variant="goflock", repel_w2=True, repel_w3w4=False, projection="iw2"),
    "w3w4_only": ControllerConfig(variant="goflock", repel_w2=False, repel_w3w4=True, projection="w4w3"),
}


def select_neighbors(
    self_id: int, self_pos: Vec3, all_poses: Sequence[tuple], k: int
) -> list[tuple]:
    """The k nearest other agents as (id, position, velocity), ascending by
    distance with ids breaking ties."""
    others = [(norm(np.asarray(p) - self_pos), aid, p, v) for aid, p, v in all_poses if aid != self_id]
    others.sort(key=lambda item: (item[0], item[1]))
    return [(aid, p, v) for _, aid, p, v in others[:k]]


def neighbor_term(self_pos: Vec3, j_pos: Vec3, gains: NavGains) -> Vec3:
    """Spacing adjustment toward neighbor j; zero inside the dead zone."""
    rel = self_pos - j_pos
    d = norm(rel)
    if d < 1e-12:
        return gains.phi_n * gains.tau * _COINCIDENT_AXIS.copy()
    if abs(gains.tau - d) <= gains.beta:
        return np.zeros(3)
    return gains.phi_n * (gains.tau - d) * (rel / d)


def goal_term(self_pos: Vec3, target: Vec3, goal_visible: bool, gains: NavGains) -> Vec3:
    """Attraction toward the active target, saturated at phi_g.

    The caller passes the waypoint when the goal is out of sight and the
    goal itself otherwise; the magnitude law is the same on both branches.
    """
    rel = target - self_pos
    d = norm(rel)
    if d < 1e-12:
        return np.zeros(3)
    return min(gains.phi_g * d, gains.phi_g) * (rel / d)


def obstacle_term(
    self_pos: Vec3,
    w2: Optional[Vec3],
    w3: Optional[Vec3],
    w4: Optional[Vec3],
    gains: NavGains,
    include_w2: bool = True,
    include_w3w4: bool = True,
) -> Vec3:
    """Repulsion from the virtual agents, active inside sigma_s.

    When w3 coincides with w4 (obstacle dead ahead on the path segment)
    that addend falls back to the agent->w2 axis.
    """
    out = np.zeros(3)
    if w2 is None:
        return out
    rel_i_w2 = self_pos - w2
    d_i_w2 = norm(rel_i_w2)
    if include_w3w4 and w3 is not None and w4 is not None:
        rel = w4 - w3
        d = norm(rel)
        mag = max(gains.sigma_s - d, 0.0) / gains.sigma_s
        if mag > 0.0:
            if d >= 1e-12:
                out = out + gains.phi_o * mag * (rel / d)
            elif d_i_w2 >= 1e-12:
                out = out + gains.phi_o * mag * (rel_i_w2 / d_i_w2)
    if include_w2 and d_i_w2 >= 1e-12:
        mag = max(gains.sigma_s - d_i_w2, 0.0) / gains.sigma_s
        out = out + gains.phi_o * mag * (rel_i_w2 / d_i_w2)
    return out


def strip_component(v: Vec3, axis_unit: Vec3) -> Vec3:
    """v minus its projection onto the (unit) axis."""
    return v - float(np.dot(v, axis_unit)) * axis_unit


def project_neighbor_term(
    v_neigh: Vec3,
    w3: Optional[Vec3],
    w4: Optional[Vec3],
    self_to_w2_dist: float,
    gains: NavGains,
) -> Vec3:
    """Remove the neighbor-term component along the w4-w3 axis while the
    agent is within the activation distance of the nearest obstacle.
    Passes v through unchanged when inactive or when w3 == w4."""
    if self_to_w2_dist >= gains.sigma_s:
        return v_neigh.copy()
    if w3 is None or w4 is None:
        return v_neigh.copy()
    axis = w4 - w3
    d = norm(axis)
    if d < 1e-12:
        return v_neigh.copy()
    return strip_component(v_neigh, axis / d)


def compose_command(
    goal_t: Vec3, neighbor_sum: Vec3, obstacle_t: Vec3, gains: NavGains
) -> Vec3:
    """Sum the terms and clamp the norm to phi_max, preserving direction."""
    v = goal_t + neighbor_sum + obstacle_t
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite velocity command: {v}")
    speed = norm(v)
    if speed > gains.phi_max:
        v = v * (gains.phi_max / speed)
    return v


def _neighbor_sum(
    self_pos: Vec3,
    neighbors: Sequence[tuple],
    gains: NavGains,
    perc: PerceptionOutput,
    projection: str,
) -> Vec3:
    total = np.zeros(3)
    if not neighbors:
        return total
    axis_unit = None
    if projection != "off" and perc.w2 is not None and norm(self_pos - perc.w2) < gains.sigma_s:
        if projection == "w4w3" and perc.w3 is not None and perc.w4 is not None:
            axis = perc.w4 - perc.w3
            d = norm(axis)
            if d >= 1e-12:
                axis_unit = axis / d
        elif projection == "iw2":
            axis = self_pos - perc.w2
            d = norm(axis)
            if d >= 1e-12:
                axis_unit = axis / d
    for _, j_pos, _ in neighbors:
        term = neighbor_term(self_pos, np.asarray(j_pos), gains)
        if axis_unit is not None:
            term = strip_component(term, axis_unit)
        total = total + term
    return total


def goflock_command(
    self_pos: Vec3,
    perc: PerceptionOutput,
    goal: Vec3,
    neighbors: Sequence[tuple],
    gains: NavGains,
    ctrl: ControllerConfig = ControllerConfig(),
) -> Vec3:
    """Waypoint-guided command (also used by the ablation variants)."""
    target = goal if perc.goal_visible else perc.w1
    g_t = goal_term(self_pos, target, perc.goal_visible, gains)
    n_t = _neighbor_sum(self_pos, neighbors, gains, perc, ctrl.projection)
    o_t = obstacle_term(
        self_pos, perc.w2, perc.w3, perc.w4, gains,
        include_w2=ctrl.repel_w2, include_w3w4=ctrl.repel_w3w4,
    )
    return compose_command(g_t, n_t, o_t, gains)


def baseline_command(
    self_pos: Vec3,
    goal: Vec3,
    w2: Optional[Vec3],
    neighbors: Sequence[tuple],
    gains: NavGains,
) -> Vec3:
    """Passive variant: waypoint fixed at the goal, w2 repulsion only, no
    neighbor-term projection."""
    g_t = goal_term(self_pos, goal, True, gains)
    n_t = np.zeros(3)
    for _, j_pos, _ in neighbors:
        n_t = n_t + neighbor_term(self_pos, np.asarray(j_pos), gains)
    o_t = obstacle_term(self_pos, w2, None, None, gains, include_w2=True, include_w3w4=False)
    return compose_command(g_t, n_t, o_t, gains)


def siphon_command(
    self_pos: Vec3,
    goal: Vec3,
    w2: Optional[Vec3],
    neighbors: Sequence[tuple],
    gains: NavGains,
    is_stuck: bool,
    free_positions: Sequence[Vec3],
) -> Vec3:
    """Baseline plus a pull from a stuck agent toward the nearest free one.

    Free agents (and stuck agents with no free agent left) behave exactly
    like the baseline. The pull joins the sum before the speed clamp.
    """
    g_t = goal_term(self_pos, goal, True, gains)
    n_t = np.zeros(3)
    for _, j_pos, _ in neighbors:
        n_t = n_t + neighbor_term(self_pos, np.asarray(j_pos), gains)
    o_t = obstacle_term(self_pos, w2, None, None, gains, include_w2=True, include_w3w4=False)
    if is_stuck and len(free_positions) > 0:
        best = None
        best_d = math.inf
        for p in free_positions:
            d = norm(np.asarray(p) - self_pos)
            if d < best_d:
                best_d = d
                best = np.asarray(p)
        if best is not None and best_d > 1e-12:
            o_t = o_t + gains.phi_siphon * (best - self_pos) / best_d
    return compose_command(g_t, n_t, o_t, gains)
