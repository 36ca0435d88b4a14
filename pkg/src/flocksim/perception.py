"""Waypoint and virtual-agent extraction from the local occupancy map.

Pipeline per update: slide the map window, fuse the latest depth image,
inflate occupied space by the safety margin, plan a grid path toward the
goal, pull the target waypoint w1 to the farthest path vertex still in
line of sight (the tangent point when rounding an obstacle), and derive
three obstacle anchors:

  w2  nearest occupied point to the agent
  w3  occupied point nearest to the agent->w1 segment
  w4  point of that segment nearest to w3

w2/w3 act as repelling virtual agents; w4-w3 defines the off-path axis
used to strip unsafe velocity components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import astar
from .geometry import Segment, Vec3, nearest_point_on_segment, norm
from .mapping import (
    FREE,
    OCCUPIED,
    GridSpec,
    OccupancyGrid,
    grid_line_free,
    inflate,
    integrate_depth,
    nearest_occupied,
    nearest_occupied_to_segment,
    rasterize_obstacles,
    recenter,
)
from .world import CameraModel, ObstacleSet, render_depth


class StartOccupiedError(RuntimeError):
    """Planning start voxel is occupied (distinct from goal unreachable)."""


@dataclass(frozen=True)
class PerceptionOutput:
    w1: Vec3
    w2: Optional[Vec3]
    w3: Optional[Vec3]
    w4: Optional[Vec3]
    goal_visible: bool


@dataclass(frozen=True)
class GridPath:
    indices: np.ndarray  # (K, 3) voxel indices
    points: np.ndarray   # (K, 3) voxel centers, world frame

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def cost(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


#: Retarget search radius (in voxels) when the goal voxel is occupied.
GOAL_RETARGET_VOXELS = 2.0


def _retarget_offsets() -> np.ndarray:
    r = int(GOAL_RETARGET_VOXELS)
    cands = []
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            for dk in range(-r, r + 1):
                d2 = di * di + dj * dj + dk * dk
                if 0 < d2 <= GOAL_RETARGET_VOXELS**2:
                    cands.append((d2, di, dj, dk))
    cands.sort()
    return np.array([(di, dj, dk) for _, di, dj, dk in cands], dtype=np.int64)


_RETARGET = _retarget_offsets()


def _project_goal_into_window(grid: OccupancyGrid, start: Vec3, goal: Vec3) -> Vec3:
    """Goal point clipped to the window boundary along start->goal."""
    lo = grid.origin + grid.resolution
    hi = grid.extent_hi - grid.resolution
    d = goal - start
    t_exit = 1.0
    for axis in range(3):
        if d[axis] > 1e-12:
            t_exit = min(t_exit, (hi[axis] - start[axis]) / d[axis])
        elif d[axis] < -1e-12:
            t_exit = min(t_exit, (lo[axis] - start[axis]) / d[axis])
    return start + max(t_exit, 0.0) * d


def plan_path(grid: OccupancyGrid, start: Vec3, goal: Vec3) -> Optional[GridPath]:
    """Cost-minimal 26-connected path over the (inflated) grid.

    The goal may lie outside the window; it is then projected onto the
    window boundary along the start->goal line. An occupied goal voxel is
    retargeted to the nearest free voxel within two voxels, otherwise the
    plan is unreachable (None). An occupied start voxel raises
    StartOccupiedError.
    """
    start_idx = grid.world_to_voxel(start)
    if not grid.in_bounds(start_idx):
        raise StartOccupiedError(f"start {start} outside the grid window")
    if grid.cells[start_idx] == OCCUPIED:
        raise StartOccupiedError(f"start voxel {start_idx} is occupied")

    goal_pt = goal if grid.contains_point(goal) else _project_goal_into_window(grid, start, goal)
    goal_idx = np.array(grid.world_to_voxel(goal_pt), dtype=np.int64)
    goal_idx = np.clip(goal_idx, 0, np.array(grid.dims) - 1)

    if grid.cells[tuple(goal_idx)] == OCCUPIED:
        for off in _RETARGET:
            cand = goal_idx + off
            if grid.in_bounds(cand) and grid.cells[tuple(cand)] != OCCUPIED:
                goal_idx = cand
                break
        else:
            return None

    result = astar.astar_search(grid.cells == OCCUPIED, tuple(start_idx), tuple(goal_idx))
    if result is None:
        return None
    idx, _ = result
    points = grid.origin + (idx.astype(np.float64) + 0.5) * grid.resolution
    return GridPath(indices=idx, points=points)


def select_waypoint(path: GridPath, agent_pos: Vec3, goal: Vec3, grid: OccupancyGrid) -> Vec3:
    """Farthest path vertex visible from the agent (string pulling).

    If the final vertex is visible the true goal is returned instead,
    unless the goal itself sits in occupied space (retargeted plans).
    """
    if len(path) == 0:
        raise ValueError("select_waypoint requires a non-empty path")
    if len(path) == 1:
        return path.points[0].copy()
    visible_k = 0
    for k in range(len(path) - 1, -1, -1):
        if grid_line_free(grid, agent_pos, path.points[k]):
            visible_k = k
            break
    if visible_k == len(path) - 1:
        goal_idx = grid.world_to_voxel(goal)
        if not grid.in_bounds(goal_idx) or grid.cells[goal_idx] != OCCUPIED:
            return goal.copy()
    return path.points[visible_k].copy()


def compute_virtual_agents(
    agent_pos: Vec3, w1: Vec3, grid: OccupancyGrid, sense_radius: float
) -> tuple[Optional[Vec3], Optional[Vec3], Optional[Vec3]]:
    """Obstacle anchors (w2, w3, w4) from the sensed map, or all None when
    no occupied voxel lies within sense_radius of the agent."""
    w2 = nearest_occupied(grid, agent_pos, sense_radius)
    if w2 is None:
        return None, None, None
    seg = Segment(agent_pos, w1)
    w3 = nearest_occupied_to_segment(grid, seg, agent_pos, sense_radius)
    w4 = nearest_point_on_segment(seg, w3)
    return w2, w3, w4


@dataclass
class PerceptionParams:
    camera: CameraModel = field(default_factory=CameraModel)
    grid_spec: GridSpec = field(default_factory=GridSpec)
    inflation: float = 0.5
    sense_radius: float = 5.0
    mode: str = "sensed"  # sensed: depth-image mapping; analytic: ground-truth raster

    def __post_init__(self):
        if self.mode not in ("sensed", "analytic"):
            raise ValueError(f"unknown perception mode: {self.mode!r}")


def update_map(
    grid: Optional[OccupancyGrid],
    agent_pos: Vec3,
    forward: Vec3,
    obstacles: ObstacleSet,
    params: PerceptionParams,
) -> OccupancyGrid:
    """Advance the agent's raw map: slide the window and fuse one frame."""
    if params.mode == "analytic":
        return rasterize_obstacles(params.grid_spec, agent_pos, obstacles)
    if grid is None:
        grid = OccupancyGrid.empty(params.grid_spec, agent_pos)
    else:
        grid = recenter(grid, params.grid_spec, agent_pos)
    img = render_depth(agent_pos, forward, params.camera, obstacles)
    return integrate_depth(grid, img)


def perceive(
    grid: OccupancyGrid,
    agent_pos: Vec3,
    goal: Vec3,
    params: PerceptionParams,
    fallback_w1: Optional[Vec3] = None,
) -> PerceptionOutput:
    """Full perception update on an already-fused raw map.

    Plans toward the goal on the inflated map and extracts w1..w4. When
    planning fails (start swallowed by inflation, or goal unreachable in
    the window) the previous waypoint is reused, falling back to a bounded
    straight-line carrot.
    """
    inflated = inflate(grid, params.inflation)
    goal_visible = grid_line_free(inflated, agent_pos, goal)
    if goal_visible:
        w1 = goal.copy()
    else:
        w1 = None
        try:
            path = plan_path(inflated, agent_pos, goal)
        except StartOccupiedError:
            path = None
        if path is not None:
            w1 = select_waypoint(path, agent_pos, goal, inflated)
        elif fallback_w1 is not None:
            w1 = fallback_w1.copy()
        else:
            to_goal = goal - agent_pos
            dist = norm(to_goal)
            w1 = goal.copy() if dist < 1e-9 else agent_pos + to_goal * min(5.0, dist) / dist
    w2, w3, w4 = compute_virtual_agents(agent_pos, w1, grid, params.sense_radius)
    return PerceptionOutput(w1=w1, w2=w2, w3=w3, w4=w4, goal_visible=goal_visible)


def perceive_obstacle_only(
    grid: OccupancyGrid, agent_pos: Vec3, goal: Vec3, params: PerceptionParams
) -> PerceptionOutput:
    """Reduced update for controllers without a planner: the waypoint is
    pinned to the goal and only w2 is extracted. Goal visibility is checked
    on the raw map (used by the stuck/free classifier)."""
    goal_visible = grid_line_free(grid, agent_pos, goal)
    w2 = nearest_occupied(grid, agent_pos, params.sense_radius)
    return PerceptionOutput(w1=goal.copy(), w2=w2, w3=None, w4=None, goal_visible=goal_visible)
