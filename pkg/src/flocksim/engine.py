"""Deterministic fixed-timestep episode execution.

Every agent runs sense -> map -> perceive at the perception rate and a
control-law evaluation at every step. Commands are computed against the
previous step's poses (double buffering), so the outcome is independent
of agent iteration order. Velocities follow commands through a first-order
lag and positions integrate kinematically.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Vec3, distance_to_primitive, nearest_point_on_primitive, norm
from .mapping import OccupancyGrid
from .navigation import (
    ControllerConfig,
    NavGains,
    baseline_command,
    goflock_command,
    select_neighbors,
    siphon_command,
)
from .perception import (
    PerceptionOutput,
    PerceptionParams,
    perceive,
    perceive_obstacle_only,
    update_map,
)
from .world import Scenario, ScenarioConfig, generate_scenario

#: Stuck classification thresholds for the siphon variant.
STUCK_WINDOW_S = 2.0
STUCK_DISPLACEMENT_M = 0.2
#: Hard-contact stand-off: agents cannot approach an obstacle surface closer
#: than this (kinematic stand-in for rigid-body contact).
CONTACT_EPS = 0.1


class SimulationError(RuntimeError):
    """Numerical failure (NaN state) with diagnostic context."""


@dataclass
class SimConfig:
    dt: float = 1.0 / 30.0
    perception_period: float = 0.2
    velocity_alpha: float = 0.3       # first-order command tracking; 1.0 = ideal
    max_duration: float = 120.0
    goal_radius: float = 3.0          # arrival proximity (see arrival_mode)
    collision_radius: float = 0.3
    halt_on_collision: bool = True
    arrival_mode: str = "centroid"    # centroid: flock centroid in range; all: every agent

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.perception_period < self.dt:
            raise ValueError("perception_period must be >= dt")
        if not 0.0 <= self.velocity_alpha <= 1.0:
            raise ValueError("velocity_alpha must lie in [0, 1]")
        if self.arrival_mode not in ("centroid", "all"):
            raise ValueError("arrival_mode must be 'centroid' or 'all'")

    @property
    def perception_every(self) -> int:
        return max(1, int(round(self.perception_period / self.dt)))


@dataclass
class AgentState:
    id: int
    position: Vec3
    velocity: Vec3
    grid: Optional[OccupancyGrid] = None
    perception: Optional[PerceptionOutput] = None
    history: deque = field(default_factory=deque)
    stuck: bool = False


@dataclass
class RunRecord:
    run_id: int
    controller: str
    dt: float
    goal: Vec3
    positions: np.ndarray     # (T+1, M, 3)
    velocities: np.ndarray    # (T+1, M, 3)
    w1: np.ndarray            # (T+1, M, 3), NaN when absent
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    goal_visible: np.ndarray  # (T+1, M) bool
    events: list
    outcome: str              # success | collision | timeout
    min_interagent: float
    min_obstacle: float
    arrival_time: Optional[float]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt


def detect_events(
    positions: np.ndarray,
    obstacles,
    cfg: SimConfig,
    goal: Vec3,
) -> tuple[list, bool, float, float]:
    """Collision and arrival events for one snapshot of agent positions.

    Returns (events, arrived, min inter-agent distance, min obstacle
    distance). A collision is any obstacle surface or other agent center
    within collision_radius of an agent center.
    """
    m = positions.shape[0]
    events = []
    obst_d = obstacles.distances(positions)
    for i in range(m):
        if obst_d[i] < cfg.collision_radius:
            events.append({"kind": "collision_obstacle", "agent": i, "distance": float(obst_d[i])})
    min_pair = math.inf
    for i in range(m):
        for j in range(i + 1, m):
            d = norm(positions[i] - positions[j])
            min_pair = min(min_pair, d)
            if d < cfg.collision_radius:
                events.append({"kind": "collision_agent", "agents": [i, j], "distance": float(d)})
    if cfg.arrival_mode == "centroid":
        arrived = bool(np.linalg.norm(positions.mean(axis=0) - goal) <= cfg.goal_radius)
    else:
        goal_d = np.linalg.norm(positions - goal, axis=1)
        arrived = bool(np.all(goal_d <= cfg.goal_radius))
    return events, arrived, float(min_pair), float(obst_d.min()) if m else math.inf


def resolve_contact(position: Vec3, velocity: Vec3, obstacles) -> tuple[Vec3, Vec3]:
    """Inelastic contact against the true obstacle surfaces.

    An agent ending a step inside CONTACT_EPS of (or inside) an obstacle is
    pushed back onto the stand-off shell and its velocity is absorbed.
    Emulates rigid-body contact so bounded repulsion cannot tunnel agents
    through walls; collision events are detected separately and
    unaffected.
    """
    for prim in obstacles.primitives:
        if distance_to_primitive(prim, position) >= CONTACT_EPS:
            continue
        surf = nearest_point_on_primitive(prim, position)
        off = position - surf
        d = norm(off)
        if d < 1e-9:
            continue
        outward = -off / d if prim.contains(position) else off / d
        position = surf + CONTACT_EPS * outward
        velocity = np.zeros(3)
    return position, velocity


def _camera_forward(agent: AgentState, goal: Vec3) -> Vec3:
    v = agent.velocity
    if norm(v) > 1e-6:
        return v / norm(v)
    to_goal = goal - agent.position
    if norm(to_goal) > 1e-9:
        return to_goal / norm(to_goal)
    return np.array([1.0, 0.0, 0.0])


class Simulation:
    """Single-episode runner over a generated scenario."""

    def __init__(
        self,
        scenario: Scenario,
        controller: ControllerConfig,
        gains: NavGains,
        sim_cfg: SimConfig,
        perc_params: PerceptionParams,
        run_id: int = 0,
    ):
        self.scenario = scenario
        self.controller = controller
        self.gains = gains
        self.cfg = sim_cfg
        self.perc = perc_params
        self.run_id = run_id
        self.goal = scenario.goal
        hist_len = int(round(STUCK_WINDOW_S / sim_cfg.dt)) + 1
        self.agents = [
            AgentState(
                id=i,
                position=scenario.starts[i].copy(),
                velocity=np.zeros(3),
                history=deque([scenario.starts[i].copy()], maxlen=hist_len),
            )
            for i in range(scenario.starts.shape[0])
        ]

    # -- per-step pieces ----------------------------------------------------

    def _update_perception(self) -> None:
        for agent in self.agents:
            forward = _camera_forward(agent, self.goal)
            agent.grid = update_map(
                agent.grid, agent.position, forward, self.scenario.obstacles, self.perc
            )
            if self.controller.variant == "goflock":
                fallback = agent.perception.w1 if agent.perception is not None else None
                agent.perception = perceive(
                    agent.grid, agent.position, self.goal, self.perc, fallback_w1=fallback
                )
            else:
                agent.perception = perceive_obstacle_only(
                    agent.grid, agent.position, self.goal, self.perc
                )

    def _classify_stuck(self) -> None:
        for agent in self.agents:
            full = len(agent.history) == agent.history.maxlen
            displacement = norm(agent.position - agent.history[0]) if full else math.inf
            goal_visible = agent.perception.goal_visible if agent.perception else True
            agent.stuck = (not goal_visible) and displacement < STUCK_DISPLACEMENT_M

    def _commands(self, poses_prev: list) -> list:
        cmds = []
        free_positions = [a.position.copy() for a in self.agents if not a.stuck]
        for agent in self.agents:
            neighbors = select_neighbors(
                agent.id, agent.position, poses_prev, self.gains.k_neighbors
            )
            perc = agent.perception
            if self.controller.variant == "goflock":
                cmd = goflock_command(
                    agent.position, perc, self.goal, neighbors, self.gains, self.controller
                )
            elif self.controller.variant == "baseline":
                cmd = baseline_command(
                    agent.position, self.goal, perc.w2 if perc else None, neighbors, self.gains
                )
            else:
                cmd = siphon_command(
                    agent.position,
                    self.goal,
                    perc.w2 if perc else None,
                    neighbors,
                    self.gains,
                    agent.stuck,
                    free_positions,
                )
            cmds.append(cmd)
        return cmds

    # -- episode ------------------------------------------------------------

    def run(self) -> RunRecord:
        cfg = self.cfg
        m = len(self.agents)
        max_steps = int(math.ceil(cfg.max_duration / cfg.dt))
        shape = (max_steps + 1, m, 3)
        positions = np.full(shape, np.nan)
        velocities = np.full(shape, np.nan)
        w_logs = {k: np.full(shape, np.nan) for k in ("w1", "w2", "w3", "w4")}
        goal_visible = np.zeros((max_steps + 1, m), dtype=bool)
        events: list = []
        outcome = "timeout"
        arrival_time: Optional[float] = None
        min_pair_all = math.inf
        min_obst_all = math.inf

        positions[0] = [a.position for a in self.agents]
        velocities[0] = 0.0
        _, arrived0, p0, o0 = detect_events(
            positions[0], self.scenario.obstacles, cfg, self.goal
        )
        min_pair_all = min(min_pair_all, p0)
        min_obst_all = min(min_obst_all, o0)

        steps_done = 0
        for step in range(max_steps):
            if step % cfg.perception_every == 0:
                self._update_perception()
            if self.controller.variant == "siphon":
                self._classify_stuck()

            poses_prev = [(a.id, a.position.copy(), a.velocity.copy()) for a in self.agents]
            cmds = self._commands(poses_prev)

            alpha = cfg.velocity_alpha
            for agent, cmd in zip(self.agents, cmds):
                agent.velocity = (1.0 - alpha) * agent.velocity + alpha * cmd
                agent.position = agent.position + agent.velocity * cfg.dt
            if self.scenario.obstacles.primitives:
                near = self.scenario.obstacles.distances(
                    np.array([a.position for a in self.agents])
                )
                for agent, d in zip(self.agents, near):
                    if d < CONTACT_EPS:
                        agent.position, agent.velocity = resolve_contact(
                            agent.position, agent.velocity, self.scenario.obstacles
                        )
            for agent in self.agents:
                agent.history.append(agent.position.copy())
                if not (np.all(np.isfinite(agent.position)) and np.all(np.isfinite(agent.velocity))):
                    raise SimulationError(
                        f"non-finite state for agent {agent.id} at step {step}: "
                        f"pos={agent.position}, vel={agent.velocity}"
                    )

            row = step + 1
            positions[row] = [a.position for a in self.agents]
            velocities[row] = [a.velocity for a in self.agents]
            for agent in self.agents:
                perc = agent.perception
                if perc is None:
                    continue
                goal_visible[row, agent.id] = perc.goal_visible
                w_logs["w1"][row, agent.id] = perc.w1
                for key, val in (("w2", perc.w2), ("w3", perc.w3), ("w4", perc.w4)):
                    if val is not None:
                        w_logs[key][row, agent.id] = val

            step_events, arrived, min_pair, min_obst = detect_events(
                positions[row], self.scenario.obstacles, cfg, self.goal
            )
            min_pair_all = min(min_pair_all, min_pair)
            min_obst_all = min(min_obst_all, min_obst)
            t_now = row * cfg.dt
            for ev in step_events:
                ev["t"] = t_now
                events.append(ev)
            steps_done = row
            if step_events and cfg.halt_on_collision:
                outcome = "collision"
                break
            if arrived:
                outcome = "success"
                arrival_time = t_now
                events.append({"kind": "arrival", "t": t_now})
                break
        else:
            outcome = "timeout"
            steps_done = max_steps

        end = steps_done + 1
        return RunRecord(
            run_id=self.run_id,
            controller=self.controller.variant,
            dt=cfg.dt,
            goal=self.goal.copy(),
            positions=positions[:end],
            velocities=velocities[:end],
            w1=w_logs["w1"][:end],
            w2=w_logs["w2"][:end],
            w3=w_logs["w3"][:end],
            w4=w_logs["w4"][:end],
            goal_visible=goal_visible[:end],
            events=events,
            outcome=outcome,
            min_interagent=min_pair_all,
            min_obstacle=min_obst_all,
            arrival_time=arrival_time,
        )


def run_episode(
    scenario_cfg: ScenarioConfig,
    controller: ControllerConfig,
    seed: int,
    gains: NavGains,
    sim_cfg: SimConfig,
    perc_params: PerceptionParams,
) -> RunRecord:
    """Generate the seeded scenario and execute one full episode."""
    scenario = generate_scenario(replace(scenario_cfg, seed=seed))
    sim = Simulation(scenario, controller, gains, sim_cfg, perc_params, run_id=seed)
    return sim.run()
