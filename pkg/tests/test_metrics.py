import math

import numpy as np
import pytest

from flocksim.engine import RunRecord
from flocksim.geometry import vec3
from flocksim.metrics import (
    MetricSeries,
    average_speed,
    cosine_similarity,
    dispersion,
    evaluate_run,
    proximity_cutoff_step,
    smoothed_min_cosine,
    summarize,
)


def make_record(positions, velocities, goal, dt=1.0 / 30.0, outcome="success"):
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    shape = positions.shape
    nan = np.full(shape, np.nan)
    return RunRecord(
        run_id=0,
        controller="goflock",
        dt=dt,
        goal=np.asarray(goal, dtype=float),
        positions=positions,
        velocities=velocities,
        w1=nan.copy(),
        w2=nan.copy(),
        w3=nan.copy(),
        w4=nan.copy(),
        goal_visible=np.zeros(shape[:2], dtype=bool),
        events=[],
        outcome=outcome,
        min_interagent=math.inf,
        min_obstacle=math.inf,
        arrival_time=None,
    )


class TestDispersion:
    def test_symmetric_pair(self):
        assert dispersion(np.array([[0, 0, 0], [2, 0, 0]], float)) == pytest.approx(1.0)

    def test_coincident_agents(self):
        assert dispersion(np.zeros((5, 3))) == 0.0

    def test_unit_square_corners(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
        assert dispersion(pts) == pytest.approx(math.sqrt(2) / 2)

    def test_translation_and_rotation_invariant(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-3, 3, (8, 3))
        d0 = dispersion(pts)
        assert dispersion(pts + vec3(10, -4, 2)) == pytest.approx(d0)
        th = 0.7
        rot = np.array([[math.cos(th), -math.sin(th), 0],
                        [math.sin(th), math.cos(th), 0],
                        [0, 0, 1]])
        assert dispersion(pts @ rot.T) == pytest.approx(d0)


class TestCosineSimilarity:
    def test_perfect_alignment(self):
        v = np.tile(vec3(1, 2, 0), (5, 1))
        assert cosine_similarity(v) == pytest.approx(1.0)

    def test_opposite_velocities_undefined(self):
        v = np.array([[1, 0, 0], [-1, 0, 0]], float)
        assert math.isnan(cosine_similarity(v))

    def test_orthogonal_pair(self):
        v = np.array([[1, 0, 0], [0, 1, 0]], float)
        assert cosine_similarity(v) == pytest.approx(math.sqrt(2) / 2)

    def test_scale_invariant(self):
        rng = np.random.default_rng(6)
        v = rng.normal(size=(7, 3))
        assert cosine_similarity(3.7 * v) == pytest.approx(cosine_similarity(v))

    def test_slow_agents_skipped(self):
        v = np.array([[1, 0, 0], [1, 0, 0], [1e-9, 0, 0]], float)
        assert cosine_similarity(v) == pytest.approx(1.0)

    def test_all_stationary_undefined(self):
        assert math.isnan(cosine_similarity(np.zeros((4, 3))))

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rng.normal(size=(6, 3))
            c = cosine_similarity(v)
            if not math.isnan(c):
                assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12


class TestAverageSpeed:
    def test_straight_displacement(self):
        # centroid travels 10 m in 5 s
        steps = 151
        dt = 5.0 / (steps - 1)
        pos = np.zeros((steps, 2, 3))
        for k in range(steps):
            x = 10.0 * k / (steps - 1)
            pos[k] = [[x, 1, 0], [x, -1, 0]]
        rec = make_record(pos, np.zeros_like(pos), goal=vec3(100, 0, 0), dt=dt)
        av, truncated = average_speed(rec)
        assert av == pytest.approx(2.0, rel=1e-6)
        assert truncated is False

    def test_stationary_flock(self):
        pos = np.zeros((31, 3, 3))
        rec = make_record(pos, np.zeros_like(pos), goal=vec3(50, 0, 0), outcome="timeout")
        av, truncated = average_speed(rec)
        assert av == 0.0
        assert truncated is True

    def test_l_path_uses_displacement_not_length(self):
        # 6 m along +x then 8 m along +y in 10 s: displacement 10 m
        steps = 301
        dt = 10.0 / (steps - 1)
        pos = np.zeros((steps, 1, 3))
        half = (steps - 1) // 2
        for k in range(steps):
            if k <= half:
                pos[k, 0] = [6.0 * k / half, 0, 0]
            else:
                pos[k, 0] = [6.0, 8.0 * (k - half) / half, 0]
        rec = make_record(pos, np.zeros_like(pos), goal=vec3(100, 100, 0), dt=dt)
        av, _ = average_speed(rec)
        assert av == pytest.approx(1.0, rel=1e-6)

    def test_cutoff_at_three_meters_from_goal(self):
        # agent crosses the 3 m shell around the goal mid-run
        steps = 101
        pos = np.zeros((steps, 1, 3))
        for k in range(steps):
            pos[k, 0] = [k * 0.1, 0, 0]
        rec = make_record(pos, np.zeros_like(pos), goal=vec3(10, 0, 0))
        t_idx = proximity_cutoff_step(rec)
        assert np.linalg.norm(rec.positions[t_idx, 0] - rec.goal) >= 3.0
        assert np.linalg.norm(rec.positions[t_idx + 1, 0] - rec.goal) < 3.0


class TestSummarize:
    def _series(self, av, outcome="success", c_values=None):
        c = np.array([0.9, 0.95, np.nan]) if c_values is None else np.asarray(c_values)
        return MetricSeries(
            run_id=0, controller="goflock",
            dispersion=np.array([1.0, 2.0, 3.0]),
            cosine=c,
            average_speed=av, av_truncated=False,
            min_interagent=1.0, min_obstacle=0.9, outcome=outcome,
        )

    def test_single_run_std_zero(self):
        s = summarize([self._series(1.5)])
        assert s.av_std == 0.0 and s.runs == 1

    def test_two_run_sample_std(self):
        s = summarize([self._series(1.0), self._series(2.0)])
        assert s.av_mean == pytest.approx(1.5)
        assert s.av_std == pytest.approx(math.sqrt(0.5))

    def test_success_rate(self):
        series = [self._series(1.0)] * 9 + [self._series(0.5, outcome="collision")]
        s = summarize(series)
        assert s.success_rate == pytest.approx(0.9)

    def test_nan_timesteps_excluded_from_run_mean(self):
        s = summarize([self._series(1.0)])
        assert s.c_mean == pytest.approx((0.9 + 0.95) / 2)

    def test_permutation_invariant(self):
        runs = [self._series(v) for v in (0.5, 1.0, 1.5, 2.0)]
        a = summarize(runs)
        b = summarize(list(reversed(runs)))
        assert a == b

    def test_summary_dict_keys(self):
        s = summarize([self._series(1.0)])
        assert set(s.as_dict()) == {
            "controller", "runs", "success_rate", "D_mean", "D_std",
            "C_mean", "C_std", "AV_mean", "AV_std",
            "min_interagent_mean", "min_obstacle_mean",
        }

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            summarize([])


def test_smoothed_min_cosine_suppresses_single_step_dip():
    c = np.ones(90)
    c[30] = -1.0  # single-step flicker
    s = MetricSeries(run_id=0, controller="goflock", dispersion=np.ones(90),
                     cosine=c, average_speed=1.0, av_truncated=False,
                     min_interagent=1.0, min_obstacle=1.0, outcome="success")
    raw = smoothed_min_cosine(s, 0.0, 1.0 / 30.0)
    smooth = smoothed_min_cosine(s, 1.0, 1.0 / 30.0)
    assert raw == pytest.approx(-1.0)
    assert smooth > 0.85


def test_evaluate_run_shapes():
    pos = np.zeros((11, 4, 3))
    vel = np.zeros((11, 4, 3))
    rec = make_record(pos, vel, goal=vec3(30, 0, 0), outcome="timeout")
    series = evaluate_run(rec)
    assert series.dispersion.shape == (11,)
    assert series.cosine.shape == (11,)
    assert series.av_truncated is True
