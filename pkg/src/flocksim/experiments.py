"""Experiment presets, batch execution, and the performance bench.

Presets mirror the benchmark setups: a single tall slab contrasting the
waypoint controller with the siphoning escape strategy, a cluttered field
of tall boxes against the passive baseline, a three-mode obstacle-
avoidance ablation, and forest runs at two speed caps.

Suites fan runs out over worker processes; artifacts are byte-identical
regardless of job count (per-run files are written by workers keyed only
by seed, aggregates by the parent in seed order).
"""

from __future__ import annotations

import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import astar
from .artifacts import comparison_table, dump_json, record_summary, write_run_artifacts
from .config import ExperimentSpec
from .engine import SimConfig, run_episode
from .geometry import Box, vec3
from .mapping import GridSpec
from .metrics import BatchSummary, MetricSeries, evaluate_run, summarize
from .navigation import ABLATION_MODES, ControllerConfig, NavGains
from .perception import PerceptionParams, perceive, update_map
from .plots import write_run_plots
from .world import FieldParams, ScenarioConfig, generate_scenario

_BOX_SIDE_2M_DIAG = 2.0 / math.sqrt(2.0)


def preset_experiment1() -> ExperimentSpec:
    """Single 5 x 0.5 m wall, 9 agents: waypoint controller vs siphoning."""
    scenario = ScenarioConfig(
        kind="single_slab",
        agent_count=9,
        world=Box(vec3(0, 0, 0), vec3(40, 30, 16)),
        start_region=Box(vec3(6.8, 7, 5), vec3(7.8, 23, 7.5)),
        goal=vec3(36, 15, 6),
        goal_jitter=vec3(0, 3, 1),
    )
    return ExperimentSpec(
        name="experiment1",
        scenario=scenario,
        controllers=(ControllerConfig(variant="goflock"), ControllerConfig(variant="siphon")),
        runs=20,
        seed_base=100,
        gains=NavGains(),
        sim=SimConfig(max_duration=60.0, goal_radius=4.5, halt_on_collision=False),
        perception=PerceptionParams(),
        out_dir="results/experiment1",
    )


def preset_experiment2(gap: float = 2.3) -> ExperimentSpec:
    """Random field of tall 2 m-diagonal boxes, ~`gap` m of clearance."""
    scenario = ScenarioConfig(
        kind="random_field",
        agent_count=9,
        world=Box(vec3(0, 0, 0), vec3(50, 30, 16)),
        start_region=Box(vec3(4, 10, 5), vec3(6, 20, 7)),
        goal=vec3(44, 15, 6),
        goal_jitter=vec3(0, 4, 1),
        field_=FieldParams(
            diagonal=2.0,
            spacing=gap + _BOX_SIDE_2M_DIAG,
            jitter=0.5,
            region=Box(vec3(12, 3, 0), vec3(38, 27, 16)),
        ),
    )
    return ExperimentSpec(
        name="experiment2",
        scenario=scenario,
        controllers=(ControllerConfig(variant="goflock"), ControllerConfig(variant="baseline")),
        runs=30,
        seed_base=200,
        gains=NavGains(),
        sim=SimConfig(max_duration=100.0, goal_radius=4.5, halt_on_collision=False),
        perception=PerceptionParams(),
        out_dir="results/experiment2",
    )


def preset_ablation() -> ExperimentSpec:
    """Three obstacle-avoidance modes around one 2.5 m-diagonal pillar."""
    side = 2.5 / math.sqrt(2.0)
    world = Box(vec3(0, 0, 0), vec3(36, 24, 16))
    cx, cy = 18.0, 12.0
    pillar = Box(
        vec3(cx - side / 2, cy - side / 2, 0.0), vec3(cx + side / 2, cy + side / 2, 16.0)
    )
    scenario = ScenarioConfig(
        kind="custom",
        agent_count=6,
        world=world,
        start_region=Box(vec3(6.5, 8, 5), vec3(7.5, 16, 7)),
        goal=vec3(30, 12, 6),
        goal_jitter=vec3(0, 2, 1),
        custom_primitives=(pillar,),
    )
    return ExperimentSpec(
        name="ablation",
        scenario=scenario,
        controllers=(
            ABLATION_MODES["no_avoidance"],
            ABLATION_MODES["w2_only"],
            ABLATION_MODES["w3w4_only"],
        ),
        runs=20,
        seed_base=300,
        gains=NavGains(tau=2.0),
        sim=SimConfig(max_duration=60.0, goal_radius=3.0, halt_on_collision=True),
        perception=PerceptionParams(mode="analytic"),
        out_dir="results/ablation",
    )


def preset_forest(terrain_seed: int = 11, phi_max: float = 2.0, name: str = "forest") -> ExperimentSpec:
    """Forest band (40 x 30 m, 25% canopy coverage) at one speed cap."""
    scenario = ScenarioConfig(
        kind="forest",
        agent_count=9,
        terrain_seed=terrain_seed,
        world=Box(vec3(0, 0, 0), vec3(56, 30, 20)),
        start_region=Box(vec3(2.5, 9, 4.5), vec3(5.5, 21, 7.5)),
        goal=vec3(52, 15, 6),
        goal_jitter=vec3(0, 6, 1.5),
    )
    return ExperimentSpec(
        name=name,
        scenario=scenario,
        controllers=(ControllerConfig(variant="goflock"),),
        runs=30,
        seed_base=400,
        gains=NavGains(phi_max=phi_max),
        sim=SimConfig(max_duration=90.0 if phi_max >= 2.0 else 150.0,
                      goal_radius=4.5, halt_on_collision=True),
        perception=PerceptionParams(),
        out_dir=f"results/{name}",
    )


PRESETS = {
    "experiment1": preset_experiment1,
    "experiment2": preset_experiment2,
    "ablation": preset_ablation,
    "forest": preset_forest,
}


@dataclass
class SuiteResult:
    spec: ExperimentSpec
    summaries: dict       # controller label -> BatchSummary
    series: dict          # controller label -> list[MetricSeries]
    table: str


def controller_label(ctrl: ControllerConfig) -> str:
    if ctrl.variant != "goflock":
        return ctrl.variant
    for name, preset in ABLATION_MODES.items():
        if preset == ctrl:
            return f"goflock_{name}"
    return "goflock"


def _run_one(args) -> tuple:
    spec, ctrl, seed, out_dir, write_artifacts_flag, write_plots_flag = args
    record = run_episode(
        spec.scenario, ctrl, seed, spec.gains, spec.sim, spec.perception
    )
    series = evaluate_run(record)
    label = controller_label(ctrl)
    if write_artifacts_flag:
        run_dir = Path(out_dir) / label
        write_run_artifacts(record, run_dir, f"run{seed:05d}")
        if write_plots_flag:
            scenario = generate_scenario(replace(spec.scenario, seed=seed))
            write_run_plots(record, scenario.obstacles, run_dir, f"run{seed:05d}")
    return label, seed, series, record_summary(record, series)


def run_suite(
    spec: ExperimentSpec,
    jobs: int = 1,
    write_artifacts_flag: bool = True,
    write_plots_flag: bool = False,
    out_dir: Optional[str] = None,
) -> SuiteResult:
    """Execute all (controller, seed) episodes of the spec and aggregate.

    Abort with the offending seed if any run fails numerically.
    """
    astar.warmup()
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    tasks = [
        (spec, ctrl, spec.seed_base + i, str(out), write_artifacts_flag, write_plots_flag)
        for ctrl in spec.controllers
        for i in range(spec.runs)
    ]
    results = []
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_one, tasks, chunksize=1):
                results.append(res)
    else:
        for task in tasks:
            results.append(_run_one(task))
    wall = time.perf_counter() - t0

    series_by_label: dict = {}
    run_summaries: dict = {}
    for label, seed, series, summary in results:
        series_by_label.setdefault(label, []).append(series)
        run_summaries.setdefault(label, []).append(summary)
    for label in series_by_label:
        order = np.argsort([s.run_id for s in series_by_label[label]])
        series_by_label[label] = [series_by_label[label][i] for i in order]
        run_summaries[label] = sorted(run_summaries[label], key=lambda d: d["run_id"])

    summaries = {
        label: summarize(series, controller=label)
        for label, series in series_by_label.items()
    }
    labels = [controller_label(c) for c in spec.controllers]
    table = comparison_table([summaries[label] for label in labels])

    if write_artifacts_flag:
        out.mkdir(parents=True, exist_ok=True)
        for label in labels:
            payload = summaries[label].as_dict()
            payload["run_outcomes"] = [
                {
                    "run_id": d["run_id"],
                    "outcome": d["outcome"],
                    "collision_events": d["collision_events"],
                }
                for d in run_summaries[label]
            ]
            (out / f"summary_{label}.json").write_text(dump_json(payload), encoding="utf-8")
        (out / "table.md").write_text(table, encoding="utf-8")
        manifest = (
            f"experiment: {spec.name}\n"
            f"finished_unix: {time.time():.0f}\n"
            f"wall_seconds: {wall:.1f}\n"
            f"jobs: {jobs}\n"
            f"host: {platform.node()} ({platform.machine()})\n"
        )
        (out / "run_manifest.txt").write_text(manifest, encoding="utf-8")

    return SuiteResult(spec=spec, summaries=summaries, series=series_by_label, table=table)


def bench(
    terrain_seed: int = 11,
    nav_iters: int = 2000,
    perception_iters: int = 1000,
) -> dict:
    """Wall-time of one navigation command and one full perception tick.

    The perception tick covers render -> integrate -> inflate -> plan ->
    waypoint -> virtual agents for an agent inside the forest preset.
    """
    from .navigation import goflock_command

    astar.warmup()
    spec = preset_forest(terrain_seed=terrain_seed)
    scenario = generate_scenario(replace(spec.scenario, seed=spec.seed_base))
    params = spec.perception
    pos = vec3(20.0, 15.0, 6.0)
    forward = vec3(1.0, 0.0, 0.0)
    goal = scenario.goal

    grid = None
    for _ in range(3):
        grid = update_map(grid, pos, forward, scenario.obstacles, params)
    perc = perceive(grid, pos, goal, params)

    neighbors = [
        (1, pos + vec3(0.0, 2.5, 0.0), vec3(1.0, 0.0, 0.0)),
        (2, pos + vec3(-2.0, -1.5, 0.5), vec3(1.0, 0.0, 0.0)),
        (3, pos + vec3(-2.5, 1.0, -0.5), vec3(1.0, 0.0, 0.0)),
    ]
    gains = spec.gains
    t0 = time.perf_counter()
    for _ in range(nav_iters):
        goflock_command(pos, perc, goal, neighbors, gains)
    nav_s = (time.perf_counter() - t0) / nav_iters

    t0 = time.perf_counter()
    for _ in range(perception_iters):
        g = update_map(grid, pos, forward, scenario.obstacles, params)
        perceive(g, pos, goal, params)
    perc_s = (time.perf_counter() - t0) / perception_iters

    return {
        "nav_command_mean_us": nav_s * 1e6,
        "perception_tick_mean_ms": perc_s * 1e3,
        "nav_iters": nav_iters,
        "perception_iters": perception_iters,
        "nav_rate_hz": 1.0 / nav_s,
        "perception_rate_hz": 1.0 / perc_s,
        "cpu": platform.processor() or platform.machine(),
        "cores": os.cpu_count(),
    }
