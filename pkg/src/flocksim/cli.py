"""Command-line entry point.

Verbs:
  run    single episode -> trajectory CSV, run JSON, optional SVG plots
  suite  full experiment batch (preset or YAML spec)
  ablate the three-mode obstacle-avoidance study
  bench  perception/navigation timing report
  plot   re-render SVG plots from a stored trajectory CSV

Exit codes: 0 success, 2 configuration error, 3 run failure (numerical
abort).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .artifacts import dump_json, write_run_artifacts
from .config import ConfigError, ExperimentSpec, SCHEMA_TEXT, load_spec, save_spec
from .engine import SimulationError, run_episode
from .experiments import PRESETS, bench, run_suite
from .navigation import ControllerConfig
from .plots import write_run_plots
from .world import ScenarioError, generate_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNFAIL = 3


def _spec_from_args(args) -> ExperimentSpec:
    if args.spec is not None:
        spec = load_spec(Path(args.spec))
    elif args.preset is not None:
        spec = PRESETS[args.preset]()
    else:
        raise ConfigError("either --spec FILE or --preset NAME is required")
    if args.out is not None:
        spec = replace(spec, out_dir=args.out)
    if getattr(args, "runs", None):
        spec = replace(spec, runs=args.runs)
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed_base=args.seed)
    return spec


def _cmd_run(args) -> int:
    spec = _spec_from_args(args)
    controllers = {c.variant: c for c in spec.controllers}
    if args.controller:
        ctrl = controllers.get(args.controller, ControllerConfig(variant=args.controller))
    else:
        ctrl = spec.controllers[0]
    seed = spec.seed_base if args.seed is None else args.seed
    record = run_episode(spec.scenario, ctrl, seed, spec.gains, spec.sim, spec.perception)
    out = Path(spec.out_dir)
    stem = f"run{seed:05d}"
    write_run_artifacts(record, out, stem)
    if args.plots:
        scenario = generate_scenario(replace(spec.scenario, seed=seed))
        write_run_plots(record, scenario.obstacles, out, stem)
    print(f"{record.outcome}: {record.duration:.1f} s simulated, artifacts in {out}")
    return EXIT_OK


def _cmd_suite(args) -> int:
    spec = _spec_from_args(args)
    result = run_suite(spec, jobs=args.jobs, write_plots_flag=args.plots)
    print(result.table)
    print(f"artifacts in {Path(spec.out_dir).resolve()}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    spec = PRESETS["ablation"]()
    if args.out is not None:
        spec = replace(spec, out_dir=args.out)
    if args.runs:
        spec = replace(spec, runs=args.runs)
    result = run_suite(spec, jobs=args.jobs)
    print(result.table)
    for label, summary in result.summaries.items():
        collisions = sum(1 for s in result.series[label] if s.outcome == "collision")
        print(f"{label}: {collisions}/{summary.runs} runs with collisions")
    return EXIT_OK


def _cmd_bench(args) -> int:
    report = bench(nav_iters=args.nav_iters, perception_iters=args.perception_iters)
    print(dump_json(report), end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bench.json").write_text(dump_json(report), encoding="utf-8")
    nav_ok = report["nav_command_mean_us"] < 1000.0
    perc_ok = report["perception_tick_mean_ms"] < 50.0
    print(f"navigation < 1 ms: {'yes' if nav_ok else 'NO'}; "
          f"perception < 50 ms: {'yes' if perc_ok else 'NO'}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .artifacts import load_record_csv

    spec = _spec_from_args(args)
    record = load_record_csv(Path(args.csv))
    scenario = generate_scenario(replace(spec.scenario, seed=record.run_id))
    out = Path(args.out if args.out else spec.out_dir)
    write_run_plots(record, scenario.obstacles, out, Path(args.csv).stem)
    print(f"plots in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flocksim",
        description="Deterministic 3D flocking simulator and benchmark harness",
    )
    parser.add_argument("--print-schema", action="store_true",
                        help="print the experiment spec schema and exit")
    sub = parser.add_subparsers(dest="verb")

    def add_spec_args(p, with_runs=True):
        p.add_argument("--spec", help="experiment spec YAML file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="seed (base) override")
        if with_runs:
            p.add_argument("--runs", type=int, help="run count override")

    p_run = sub.add_parser("run", help="execute one episode")
    add_spec_args(p_run, with_runs=False)
    p_run.add_argument("--controller", help="controller variant (goflock|baseline|siphon)")
    p_run.add_argument("--plots", action="store_true", help="emit SVG plots")

    p_suite = sub.add_parser("suite", help="execute an experiment batch")
    add_spec_args(p_suite)
    p_suite.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_suite.add_argument("--plots", action="store_true", help="emit per-run SVG plots")

    p_abl = sub.add_parser("ablate", help="run the obstacle-avoidance ablation")
    p_abl.add_argument("--out", help="output directory override")
    p_abl.add_argument("--runs", type=int, help="runs per mode")
    p_abl.add_argument("--jobs", type=int, default=1)

    p_bench = sub.add_parser("bench", help="timing microbenchmark")
    p_bench.add_argument("--nav-iters", type=int, default=2000)
    p_bench.add_argument("--perception-iters", type=int, default=1000)
    p_bench.add_argument("--out", help="write bench.json here")

    p_plot = sub.add_parser("plot", help="re-render plots from a trajectory CSV")
    add_spec_args(p_plot, with_runs=False)
    p_plot.add_argument("csv", help="trajectory CSV produced by run/suite")

    p_save = sub.add_parser("save-spec", help="write a preset spec to a YAML file")
    p_save.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p_save.add_argument("path", help="destination YAML file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        print(SCHEMA_TEXT, end="")
        return EXIT_OK
    if args.verb is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "suite":
            return _cmd_suite(args)
        if args.verb == "ablate":
            return _cmd_ablate(args)
        if args.verb == "bench":
            return _cmd_bench(args)
        if args.verb == "plot":
            return _cmd_plot(args)
        if args.verb == "save-spec":
            save_spec(PRESETS[args.preset](), Path(args.path))
            print(f"wrote {args.path}")
            return EXIT_OK
        parser.print_help()
        return EXIT_CONFIG
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return EXIT_RUNFAIL


if __name__ == "__main__":
    sys.exit(main())
