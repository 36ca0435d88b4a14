import math
from dataclasses import replace

import numpy as np
import pytest

from flocksim import astar
from flocksim.engine import (
    CONTACT_EPS,
    SimConfig,
    Simulation,
    detect_events,
    resolve_contact,
    run_episode,
)
from flocksim.geometry import Box, vec3
from flocksim.navigation import ControllerConfig, NavGains
from flocksim.perception import PerceptionParams
from flocksim.world import ObstacleSet, ScenarioConfig, generate_scenario

astar.warmup()

GAINS = NavGains()
ANALYTIC = PerceptionParams(mode="analytic")


def empty_scenario(agent_count=1, goal=vec3(60, 15, 6), seed=0, world_hi=vec3(80, 30, 16)):
    return ScenarioConfig(
        kind="custom", seed=seed, agent_count=agent_count,
        world=Box(vec3(0, 0, 0), world_hi),
        start_region=Box(vec3(2, 12, 5), vec3(6, 18, 7)),
        goal=goal, goal_jitter=vec3(0, 0, 0),
    )


class TestStepBasics:
    def test_single_agent_ideal_tracking_straight_line(self):
        cfg = empty_scenario()
        sim_cfg = SimConfig(velocity_alpha=1.0, max_duration=5.0, arrival_mode="all")
        scenario = generate_scenario(cfg)
        sim = Simulation(scenario, ControllerConfig(variant="goflock"), GAINS, sim_cfg, ANALYTIC)
        rec = sim.run()
        start = rec.positions[0, 0]
        direction = (rec.goal - start) / np.linalg.norm(rec.goal - start)
        step_len = min(GAINS.phi_g, GAINS.phi_max) * sim_cfg.dt
        for k in range(1, 12):
            expected = start + k * step_len * direction
            assert np.allclose(rec.positions[k, 0], expected, atol=1e-9)

    def test_two_agents_at_tau_pure_goal_pursuit(self):
        cfg = ScenarioConfig(
            kind="custom", seed=1, agent_count=2,
            world=Box(vec3(0, 0, 0), vec3(60, 30, 16)),
            start_region=Box(vec3(2, 10, 5), vec3(6, 20, 7)),
            goal=vec3(50, 15, 6), goal_jitter=vec3(0, 0, 0),
        )
        scenario = generate_scenario(cfg)
        scenario.starts[0] = vec3(4, 15 - GAINS.tau / 2, 6)
        scenario.starts[1] = vec3(4, 15 + GAINS.tau / 2, 6)
        sim_cfg = SimConfig(velocity_alpha=1.0, max_duration=1.0)
        sim = Simulation(scenario, ControllerConfig(variant="goflock"), GAINS, sim_cfg, ANALYTIC)
        for agent in sim.agents:
            agent.position = scenario.starts[agent.id].copy()
        rec = sim.run()
        # spacing stays inside the dead zone: both fly straight at the goal
        v0 = rec.velocities[1, 0] / np.linalg.norm(rec.velocities[1, 0])
        to_goal = (rec.goal - rec.positions[0, 0])
        to_goal /= np.linalg.norm(to_goal)
        assert np.allclose(v0, to_goal, atol=1e-9)

    def test_determinism_bit_identical(self):
        cfg = ScenarioConfig(kind="single_slab", seed=5, agent_count=9)
        sim_cfg = SimConfig(max_duration=3.0)
        a = run_episode(cfg, ControllerConfig(variant="goflock"), 5, GAINS, sim_cfg, PerceptionParams())
        b = run_episode(cfg, ControllerConfig(variant="goflock"), 5, GAINS, sim_cfg, PerceptionParams())
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)
        assert a.outcome == b.outcome
        assert np.array_equal(a.w1, b.w1, equal_nan=True)

    def test_update_order_independence(self):
        cfg = empty_scenario(agent_count=5, goal=vec3(40, 15, 6), world_hi=vec3(50, 30, 16))
        scenario = generate_scenario(cfg)
        sim_cfg = SimConfig(max_duration=2.0)

        ref = Simulation(scenario, ControllerConfig(variant="goflock"), GAINS, sim_cfg, ANALYTIC).run()
        perm = Simulation(scenario, ControllerConfig(variant="goflock"), GAINS, sim_cfg, ANALYTIC)
        perm.agents = perm.agents[::-1]  # reversed update order
        rec = perm.run()
        order = [a.id for a in perm.agents]
        for row in range(rec.positions.shape[0]):
            for slot, aid in enumerate(order):
                assert np.array_equal(rec.positions[row, slot], ref.positions[row, aid])

    def test_speed_cap_invariant(self):
        cfg = ScenarioConfig(kind="single_slab", seed=3, agent_count=6)
        rec = run_episode(cfg, ControllerConfig(variant="goflock"), 3, GAINS,
                          SimConfig(max_duration=6.0), PerceptionParams())
        speeds = np.linalg.norm(rec.velocities, axis=2)
        assert np.nanmax(speeds) <= GAINS.phi_max + 1e-9


class TestDetectEvents:
    def _world(self):
        slab = Box(vec3(10, 0, 0), vec3(10.5, 30, 16))
        return ObstacleSet(primitives=(slab,), bounds=Box(vec3(0, 0, 0), vec3(40, 30, 16)))

    def test_obstacle_collision_at_29cm(self):
        cfg = SimConfig()
        events, _, _, min_obst = detect_events(
            np.array([[9.71, 15.0, 6.0]]), self._world(), cfg, vec3(30, 15, 6)
        )
        assert any(e["kind"] == "collision_obstacle" for e in events)
        assert min_obst == pytest.approx(0.29)

    def test_no_collision_at_31cm(self):
        cfg = SimConfig()
        events, _, _, _ = detect_events(
            np.array([[9.69, 15.0, 6.0]]), self._world(), cfg, vec3(30, 15, 6)
        )
        assert events == []

    def test_agent_pair_collision(self):
        cfg = SimConfig()
        positions = np.array([[5, 15, 6], [5, 15.25, 6], [5, 20, 6]], dtype=float)
        events, _, min_pair, _ = detect_events(positions, self._world(), cfg, vec3(30, 15, 6))
        kinds = [e["kind"] for e in events]
        assert kinds == ["collision_agent"]
        assert events[0]["agents"] == [0, 1]
        assert min_pair == pytest.approx(0.25)

    def test_arrival_modes(self):
        world = ObstacleSet(primitives=(), bounds=Box(vec3(0, 0, 0), vec3(40, 30, 16)))
        goal = vec3(20, 15, 6)
        positions = np.array([[19, 15, 6], [26, 15, 6]], dtype=float)
        _, arrived_c, _, _ = detect_events(positions, world, SimConfig(goal_radius=4.0), goal)
        assert arrived_c  # centroid at 2.5 m
        _, arrived_all, _, _ = detect_events(
            positions, world, SimConfig(goal_radius=4.0, arrival_mode="all"), goal
        )
        assert not arrived_all


class TestContact:
    def test_penetrating_agent_pushed_out(self):
        world = ObstacleSet(
            primitives=(Box(vec3(5, 0, 0), vec3(6, 10, 10)),),
            bounds=Box(vec3(0, 0, 0), vec3(20, 10, 10)),
        )
        pos, vel = resolve_contact(vec3(5.2, 5, 5), vec3(1.0, 0, 0), world)
        assert world.distance(pos) >= CONTACT_EPS - 1e-9
        assert np.allclose(vel, 0)

    def test_agent_clear_of_obstacles_untouched(self):
        world = ObstacleSet(
            primitives=(Box(vec3(5, 0, 0), vec3(6, 10, 10)),),
            bounds=Box(vec3(0, 0, 0), vec3(20, 10, 10)),
        )
        p, v = resolve_contact(vec3(2, 5, 5), vec3(1, 0, 0), world)
        assert np.allclose(p, [2, 5, 5]) and np.allclose(v, [1, 0, 0])

    def test_agents_never_inside_obstacles_during_run(self):
        cfg = ScenarioConfig(kind="single_slab", seed=9, agent_count=9,
                             start_region=Box(vec3(6.8, 7, 5), vec3(7.8, 23, 7.5)))
        rec = run_episode(cfg, ControllerConfig(variant="baseline"), 9, GAINS,
                          SimConfig(max_duration=20.0, halt_on_collision=False),
                          PerceptionParams())
        scenario = generate_scenario(replace(cfg, seed=9))
        slab = scenario.obstacles.primitives[0]
        for row in rec.positions:
            for p in row:
                assert not slab.contains(p)


class TestRunEpisode:
    def test_empty_world_av_near_cruise_speed(self):
        cfg = empty_scenario(agent_count=9, goal=vec3(75, 15, 6), world_hi=vec3(80, 30, 16))
        rec = run_episode(cfg, ControllerConfig(variant="goflock"), 2, GAINS,
                          SimConfig(max_duration=60.0), ANALYTIC)
        assert rec.outcome == "success"
        from flocksim.metrics import average_speed

        av, truncated = average_speed(rec)
        cruise = min(GAINS.phi_g, GAINS.phi_max)
        assert not truncated
        assert abs(av - cruise) / cruise < 0.10

    def test_goal_inside_obstacle_terminates(self):
        cfg = ScenarioConfig(
            kind="custom", seed=4, agent_count=2,
            world=Box(vec3(0, 0, 0), vec3(30, 20, 12)),
            start_region=Box(vec3(2, 8, 5), vec3(5, 12, 7)),
            goal=vec3(15, 10, 6), goal_jitter=vec3(0, 0, 0),
            custom_primitives=(Box(vec3(13, 8, 0), vec3(17, 12, 12)),),
        )
        rec = run_episode(cfg, ControllerConfig(variant="goflock"), 4, GAINS,
                          SimConfig(max_duration=10.0, halt_on_collision=False), ANALYTIC)
        assert rec.outcome in ("timeout", "collision")
        assert rec.duration <= 10.0 + 1e-9

    def test_flocking_equilibrium_band_in_empty_world(self):
        cfg = empty_scenario(agent_count=9, goal=vec3(150, 15, 6), world_hi=vec3(160, 30, 16))
        rec = run_episode(cfg, ControllerConfig(variant="goflock"), 6, GAINS,
                          SimConfig(max_duration=30.0), ANALYTIC)
        final = rec.positions[-1]
        # all k-nearest-neighbor distances near tau
        for i in range(9):
            d = np.linalg.norm(final - final[i], axis=1)
            d[i] = np.inf
            for dist in np.sort(d)[: GAINS.k_neighbors]:
                assert GAINS.tau - GAINS.beta - 0.1 <= dist <= GAINS.tau + GAINS.beta + 0.1

    def test_collision_halts_by_default(self):
        cfg = ScenarioConfig(
            kind="custom", seed=8, agent_count=2,
            world=Box(vec3(0, 0, 0), vec3(30, 20, 12)),
            start_region=Box(vec3(2, 8, 5), vec3(5, 12, 7)),
            goal=vec3(25, 10, 6), goal_jitter=vec3(0, 0, 0),
            custom_primitives=(Box(vec3(10, 0, 0), vec3(11, 20, 12)),),
        )
        gains = NavGains(phi_o=0.5)  # weak repulsion forces an impact
        rec = run_episode(cfg, ControllerConfig(variant="baseline"), 8, gains,
                          SimConfig(max_duration=30.0), PerceptionParams())
        assert rec.outcome == "collision"
        assert any(e["kind"].startswith("collision") for e in rec.events)

    def test_record_shapes_consistent(self):
        cfg = empty_scenario(agent_count=3, goal=vec3(20, 15, 6), world_hi=vec3(30, 30, 16))
        rec = run_episode(cfg, ControllerConfig(variant="goflock"), 1, GAINS,
                          SimConfig(max_duration=5.0), ANALYTIC)
        n = rec.positions.shape[0]
        assert rec.velocities.shape == (n, 3, 3)
        assert rec.w1.shape == (n, 3, 3)
        assert rec.goal_visible.shape == (n, 3)
        assert rec.n_steps == n - 1
        assert rec.duration == pytest.approx(rec.n_steps * rec.dt)

    def test_siphon_stuck_classifier_state(self):
        cfg = ScenarioConfig(kind="single_slab", seed=11, agent_count=9,
                             start_region=Box(vec3(6.8, 7, 5), vec3(7.8, 23, 7.5)))
        rec = run_episode(cfg, ControllerConfig(variant="siphon"), 11, GAINS,
                          SimConfig(max_duration=30.0, halt_on_collision=False),
                          PerceptionParams())
        assert rec.outcome in ("success", "timeout")


class TestSimConfigValidation:
    def test_bad_dt(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)

    def test_perception_slower_than_dt(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.1, perception_period=0.05)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            SimConfig(velocity_alpha=1.5)

    def test_arrival_mode(self):
        with pytest.raises(ValueError):
            SimConfig(arrival_mode="halfway")

    def test_perception_every(self):
        assert SimConfig(dt=1 / 30, perception_period=0.2).perception_every == 6
