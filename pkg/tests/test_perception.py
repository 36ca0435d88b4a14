import heapq
import math

import numpy as np
import pytest

from flocksim.geometry import Box, Segment, nearest_point_on_segment, vec3
from flocksim.mapping import FREE, OCCUPIED, GridSpec, OccupancyGrid, grid_line_free, inflate, rasterize_obstacles
from flocksim.perception import (
    GridPath,
    PerceptionParams,
    StartOccupiedError,
    compute_virtual_agents,
    perceive,
    perceive_obstacle_only,
    plan_path,
    select_waypoint,
    update_map,
)
from flocksim.world import ObstacleSet


def unit_grid(dims, occupied=()):
    """Grid with 1 m voxels at origin 0 for readable planning tests."""
    g = OccupancyGrid(
        origin=vec3(0, 0, 0),
        resolution=1.0,
        cells=np.zeros(dims, dtype=np.uint8),
        free_streak=np.zeros(dims, dtype=np.uint8),
        inflated=True,
    )
    g.cells[:] = FREE
    for idx in occupied:
        g.cells[idx] = OCCUPIED
    return g


def center(idx):
    return vec3(*(np.asarray(idx, dtype=float) + 0.5))


def dijkstra_cost(blocked, start, goal):
    """Independent oracle: uniform-cost search, 26-connectivity."""
    dims = blocked.shape
    offsets = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if di == dj == dk == 0:
                    continue
                offsets.append(((di, dj, dk), math.sqrt(di * di + dj * dj + dk * dk)))
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur == goal:
            return d
        if d > dist.get(cur, math.inf):
            continue
        for (di, dj, dk), c in offsets:
            nxt = (cur[0] + di, cur[1] + dj, cur[2] + dk)
            if not all(0 <= nxt[a] < dims[a] for a in range(3)):
                continue
            if blocked[nxt]:
                continue
            nd = d + c
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return None


class TestPlanPath:
    def test_free_diagonal_cost(self):
        g = unit_grid((5, 5, 1))
        path = plan_path(g, center((0, 0, 0)), center((4, 4, 0)))
        assert path is not None
        assert path.cost == pytest.approx(4 * math.sqrt(2), abs=1e-9)
        assert len(path) == 5

    def test_wall_with_gap_matches_dijkstra(self):
        occupied = [(2, y, 0) for y in range(5) if y != 3]
        g = unit_grid((5, 5, 1), occupied)
        path = plan_path(g, center((0, 0, 0)), center((4, 0, 0)))
        assert path is not None
        assert any(tuple(i) == (2, 3, 0) for i in path.indices)
        oracle = dijkstra_cost(g.cells == OCCUPIED, (0, 0, 0), (4, 0, 0))
        assert path.cost == pytest.approx(oracle, abs=1e-9)

    def test_occupied_goal_retargets_within_two_voxels(self):
        g = unit_grid((7, 7, 1))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                g.cells[5 + dx, 5 + dy, 0] = OCCUPIED
        path = plan_path(g, center((0, 0, 0)), center((5, 5, 0)))
        assert path is not None
        end = tuple(path.indices[-1])
        assert g.cells[end] != OCCUPIED
        assert np.linalg.norm(np.array(end) - np.array((5, 5, 0))) <= 2.0

    def test_fully_sealed_goal_unreachable(self):
        g = unit_grid((9, 9, 1))
        for dx in range(-2, 3):
            for dy in range(-2, 3):
                if abs(dx) == 2 or abs(dy) == 2 or (dx == 0 and dy == 0):
                    pass
                g.cells[4 + dx, 4 + dy, 0] = OCCUPIED
        assert plan_path(g, center((0, 0, 0)), center((4, 4, 0))) is None

    def test_start_occupied_is_distinct_error(self):
        g = unit_grid((5, 5, 1), occupied=[(0, 0, 0)])
        with pytest.raises(StartOccupiedError):
            plan_path(g, center((0, 0, 0)), center((4, 4, 0)))

    def test_unreachable_returns_none(self):
        occupied = [(2, y, 0) for y in range(5)]
        g = unit_grid((5, 5, 1), occupied)
        assert plan_path(g, center((0, 0, 0)), center((4, 0, 0))) is None

    def test_goal_outside_window_projected(self):
        g = unit_grid((8, 8, 1))
        path = plan_path(g, center((1, 4, 0)), vec3(100.0, 4.5, 0.5))
        assert path is not None
        assert path.indices[-1][0] >= 6  # reaches the +x window edge region

    def test_random_grids_match_dijkstra(self):
        rng = np.random.default_rng(99)
        matches = 0
        for _ in range(25):
            blocked = rng.random((16, 16, 16)) < 0.3
            blocked[0, 0, 0] = False
            g = unit_grid((16, 16, 16))
            g.cells[blocked] = OCCUPIED
            goal = tuple(rng.integers(0, 16, 3))
            if blocked[goal]:
                continue
            oracle = dijkstra_cost(blocked, (0, 0, 0), goal)
            path = plan_path(g, center((0, 0, 0)), center(goal))
            if oracle is None:
                assert path is None
            else:
                assert path is not None
                assert path.cost == pytest.approx(oracle, abs=1e-9)
                matches += 1
        assert matches >= 10

    def test_path_vertices_adjacent_and_free(self):
        occupied = [(3, y, 0) for y in range(1, 8)]
        g = unit_grid((8, 8, 1), occupied)
        path = plan_path(g, center((0, 4, 0)), center((7, 4, 0)))
        assert path is not None
        for a, b in zip(path.indices[:-1], path.indices[1:]):
            assert np.abs(np.asarray(a) - np.asarray(b)).max() == 1
        for idx in path.indices:
            assert g.cells[tuple(idx)] != OCCUPIED


class TestSelectWaypoint:
    def test_straight_free_path_returns_goal(self):
        g = unit_grid((8, 8, 1))
        goal = center((7, 4, 0))
        path = plan_path(g, center((0, 4, 0)), goal)
        w1 = select_waypoint(path, center((0, 4, 0)), goal, g)
        assert np.allclose(w1, goal)

    def test_bend_around_wall_returns_tangent_vertex(self):
        occupied = [(3, y, 0) for y in range(0, 6)]
        g = unit_grid((8, 8, 1), occupied)
        start = center((0, 2, 0))
        goal = center((7, 2, 0))
        path = plan_path(g, start, goal)
        w1 = select_waypoint(path, start, goal, g)
        # oracle: farthest path vertex with sampled line of sight
        best = 0
        for k in range(len(path)):
            if grid_line_free(g, start, path.points[k]):
                best = k
        assert np.allclose(w1, path.points[best])
        assert not np.allclose(w1, goal)

    def test_length_one_path(self):
        g = unit_grid((4, 4, 1))
        path = GridPath(indices=np.array([[1, 1, 0]]), points=np.array([center((1, 1, 0))]))
        w1 = select_waypoint(path, center((1, 1, 0)), center((3, 3, 0)), g)
        assert np.allclose(w1, center((1, 1, 0)))

    def test_waypoint_always_visible_from_agent(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            blocked = rng.random((12, 12, 4)) < 0.25
            blocked[1, 1, 1] = False
            g = unit_grid((12, 12, 4))
            g.cells[blocked] = OCCUPIED
            goal_idx = tuple(rng.integers(0, [12, 12, 4]))
            if blocked[goal_idx]:
                continue
            start = center((1, 1, 1))
            path = plan_path(g, start, center(goal_idx))
            if path is None:
                continue
            w1 = select_waypoint(path, start, center(goal_idx), g)
            assert grid_line_free(g, start, w1)

    def test_occupied_true_goal_not_returned(self):
        g = unit_grid((8, 8, 1), occupied=[(6, 4, 0)])
        start = center((0, 4, 0))
        goal = center((6, 4, 0))  # inside the occupied voxel
        path = plan_path(g, start, goal)
        w1 = select_waypoint(path, start, goal, g)
        assert g.cells[g.world_to_voxel(w1)] != OCCUPIED


class TestVirtualAgents:
    def test_no_obstacle_in_range(self):
        g = unit_grid((8, 8, 8))
        w2, w3, w4 = compute_virtual_agents(center((1, 1, 1)), center((6, 1, 1)), g, 5.0)
        assert w2 is None and w3 is None and w4 is None

    def test_single_voxel_case(self):
        spec = GridSpec(window=(20, 20, 10), resolution=1.0)
        g = OccupancyGrid.empty(spec, vec3(0, 0, 5))
        idx = g.world_to_voxel(vec3(3, 1, 5))
        g.cells[idx] = OCCUPIED
        c = g.voxel_center(idx)
        agent, w1 = vec3(0, 0, 5) + (c - vec3(3.5, 1.5, 5.5)), None
        # align so the voxel center is exactly (3, 1, 5): use voxel-center math
        agent = c - vec3(3, 1, 0)
        w1 = agent + vec3(6, 0, 0)
        w2, w3, w4 = compute_virtual_agents(agent, w1, g, 5.0)
        assert np.allclose(w2, c)
        assert np.allclose(w3, c)
        assert np.allclose(w4, agent + vec3(3, 0, 0))

    def test_voxel_on_segment_degenerates(self):
        spec = GridSpec(window=(20, 20, 10), resolution=1.0)
        g = OccupancyGrid.empty(spec, vec3(0, 0, 5))
        idx = g.world_to_voxel(vec3(3, 0, 5))
        g.cells[idx] = OCCUPIED
        c = g.voxel_center(idx)
        agent = c - vec3(3, 0, 0)
        w1 = c + vec3(3, 0, 0)
        w2, w3, w4 = compute_virtual_agents(agent, w1, g, 5.0)
        assert np.allclose(w3, c)
        assert np.allclose(w4, w3)

    def test_w3_w4_match_exhaustive_oracle(self):
        rng = np.random.default_rng(23)
        spec = GridSpec(window=(16, 16, 8), resolution=0.25)
        for _ in range(50):
            g = OccupancyGrid.empty(spec, vec3(0, 0, 0))
            n = rng.integers(1, 25)
            idx = rng.integers(0, np.array(g.dims), size=(n, 3))
            g.cells[idx[:, 0], idx[:, 1], idx[:, 2]] = OCCUPIED
            agent = rng.uniform(-3, 3, 3)
            w1 = rng.uniform(-5, 5, 3)
            w2, w3, w4 = compute_virtual_agents(agent, w1, g, 5.0)
            occ = np.argwhere(g.cells == OCCUPIED)
            centers = g.origin + (occ + 0.5) * g.resolution
            in_range = np.linalg.norm(centers - agent, axis=1) <= 5.0
            if not in_range.any():
                assert w2 is None
                continue
            cand = centers[in_range]
            seg = Segment(agent, w1)
            seg_d = [np.linalg.norm(nearest_point_on_segment(seg, c) - c) for c in cand]
            d_w3 = np.linalg.norm(nearest_point_on_segment(seg, w3) - w3)
            assert d_w3 <= min(seg_d) + 1e-9
            assert np.allclose(w4, nearest_point_on_segment(seg, w3), atol=1e-9)

    def test_w4_projection_optimal_by_sampling(self):
        agent = vec3(0, 0, 0)
        w1 = vec3(6, 2, 1)
        spec = GridSpec(window=(16, 16, 8), resolution=0.5)
        g = OccupancyGrid.empty(spec, vec3(0, 0, 0))
        g.cells[g.world_to_voxel(vec3(3, 2, 0.2))] = OCCUPIED
        _, w3, w4 = compute_virtual_agents(agent, w1, g, 8.0)
        ts = np.linspace(0, 1, 20001)
        pts = agent + ts[:, None] * (w1 - agent)
        dmin = np.linalg.norm(pts - w3, axis=1).min()
        assert np.linalg.norm(w4 - w3) <= dmin + 1e-6


class TestPerceive:
    def _world(self):
        wall = Box(vec3(10, 2, 0), vec3(10.5, 14, 12))
        return ObstacleSet(primitives=(wall,), bounds=Box(vec3(0, 0, 0), vec3(30, 20, 12)))

    def test_sensed_pipeline_routes_around_wall(self):
        obstacles = self._world()
        params = PerceptionParams()
        pos = vec3(6.5, 8.0, 6.0)  # wall 3.5 m ahead, inside the sense radius
        goal = vec3(20.0, 8.0, 6.0)
        grid = None
        for _ in range(2):
            grid = update_map(grid, pos, vec3(1, 0, 0), obstacles, params)
        out = perceive(grid, pos, goal, params)
        assert not out.goal_visible
        assert out.w2 is not None and out.w3 is not None and out.w4 is not None
        assert not np.allclose(out.w1, goal)
        # w4 lies on the agent->w1 segment
        seg = Segment(pos, out.w1)
        assert np.linalg.norm(nearest_point_on_segment(seg, out.w4) - out.w4) < 1e-9

    def test_goal_visible_sets_w1_to_goal(self):
        obstacles = self._world()
        params = PerceptionParams()
        pos = vec3(4.0, 17.5, 6.0)
        goal = vec3(8.0, 17.5, 6.0)
        grid = update_map(None, pos, vec3(1, 0, 0), obstacles, params)
        out = perceive(grid, pos, goal, params)
        assert out.goal_visible
        assert np.allclose(out.w1, goal)

    def test_analytic_mode_matches_geometry(self):
        obstacles = self._world()
        params = PerceptionParams(mode="analytic")
        pos = vec3(7.0, 8.0, 6.0)
        goal = vec3(20.0, 8.0, 6.0)
        grid = update_map(None, pos, vec3(1, 0, 0), obstacles, params)
        out = perceive(grid, pos, goal, params)
        assert not out.goal_visible
        # w2 within half a voxel diagonal of the true nearest surface point
        true_d = obstacles.distance(pos)
        got_d = np.linalg.norm(out.w2 - pos)
        assert abs(got_d - true_d) < 0.25 * math.sqrt(3)

    def test_obstacle_only_variant_pins_w1_to_goal(self):
        obstacles = self._world()
        params = PerceptionParams()
        pos = vec3(7.0, 8.0, 6.0)
        goal = vec3(20.0, 8.0, 6.0)
        grid = update_map(None, pos, vec3(1, 0, 0), obstacles, params)
        out = perceive_obstacle_only(grid, pos, goal, params)
        assert np.allclose(out.w1, goal)
        assert out.w3 is None and out.w4 is None
        assert out.w2 is not None

    def test_tangent_angle_bounded_by_inflated_slab_edge(self):
        # single-slab scene: deviation of w1 from the direct line never
        # exceeds the angle subtended by the inflated slab's far corner
        obstacles = self._world()
        params = PerceptionParams(mode="analytic")
        pos = vec3(4.0, 8.0, 6.0)
        goal = vec3(20.0, 8.0, 6.0)
        grid = update_map(None, pos, vec3(1, 0, 0), obstacles, params)
        out = perceive(grid, pos, goal, params)
        to_w1 = out.w1 - pos
        to_goal = goal - pos
        cos_dev = float(to_w1 @ to_goal / (np.linalg.norm(to_w1) * np.linalg.norm(to_goal)))
        dev = math.acos(min(1.0, max(-1.0, cos_dev)))
        delta = params.inflation + 1.5 * grid.resolution  # inflation + voxel quantization
        corners = [vec3(10.25, 2 - delta, 6), vec3(10.25, 14 + delta, 6),
                   vec3(10.25, 8, 0 - delta), vec3(10.25, 8, 12 + delta)]
        max_sub = 0.0
        for c in corners:
            v = c - pos
            cosang = float(v @ to_goal / (np.linalg.norm(v) * np.linalg.norm(to_goal)))
            max_sub = max(max_sub, math.acos(min(1.0, max(-1.0, cosang))))
        assert dev <= max_sub + 1e-6
