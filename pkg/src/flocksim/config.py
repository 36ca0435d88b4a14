"""Experiment specification: a YAML document that fully determines a
batch (scenario, controllers, gains, sim settings, seeds, output layout).

load(save(spec)) round-trips exactly. The schema text printed by
``flocksim --print-schema`` documents every key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .geometry import Box, vec3
from .mapping import GridSpec
from .navigation import ControllerConfig, NavGains
from .perception import PerceptionParams
from .engine import SimConfig
from .world import FieldParams, ForestParams, ScenarioConfig, SlabParams
from .world import CameraModel


class ConfigError(ValueError):
    """Malformed or inconsistent experiment specification."""


@dataclass
class ExperimentSpec:
    name: str
    scenario: ScenarioConfig
    controllers: tuple
    runs: int = 1
    seed_base: int = 0
    gains: NavGains = field(default_factory=NavGains)
    sim: SimConfig = field(default_factory=SimConfig)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    out_dir: str = "results"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.controllers:
            raise ConfigError("at least one controller variant is required")

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentSpec) and spec_to_dict(self) == spec_to_dict(other)


def _vec_to_list(v) -> list:
    return [float(x) for x in v]


def _box_to_dict(b: Box) -> dict:
    return {"lo": _vec_to_list(b.lo), "hi": _vec_to_list(b.hi)}


def _box_from_dict(d: dict) -> Box:
    return Box(vec3(*d["lo"]), vec3(*d["hi"]))


def spec_to_dict(spec: ExperimentSpec) -> dict:
    sc = spec.scenario
    scenario = {
        "kind": sc.kind,
        "agent_count": sc.agent_count,
        "terrain_seed": sc.terrain_seed,
        "world": _box_to_dict(sc.world),
        "start_region": _box_to_dict(sc.start_region),
        "goal": _vec_to_list(sc.goal),
        "goal_jitter": _vec_to_list(sc.goal_jitter),
        "min_start_separation": sc.min_start_separation,
        "start_clearance": sc.start_clearance,
        "slab": {"width": sc.slab.width, "thickness": sc.slab.thickness},
        "field": {
            "diagonal": sc.field_.diagonal,
            "spacing": sc.field_.spacing,
            "jitter": sc.field_.jitter,
            "region": _box_to_dict(sc.field_.region) if sc.field_.region else None,
        },
        "forest": {
            "coverage": sc.forest.coverage,
            "area": list(sc.forest.area),
            "x_offset": sc.forest.x_offset,
            "trunk_radius": list(sc.forest.trunk_radius),
            "tree_height": list(sc.forest.tree_height),
            "foliage_radius": list(sc.forest.foliage_radius),
            "min_tree_spacing": sc.forest.min_tree_spacing,
        },
    }
    cam = spec.perception.camera
    return {
        "name": spec.name,
        "runs": spec.runs,
        "seed_base": spec.seed_base,
        "out_dir": spec.out_dir,
        "scenario": scenario,
        "controllers": [
            {
                "variant": c.variant,
                "repel_w2": c.repel_w2,
                "repel_w3w4": c.repel_w3w4,
                "projection": c.projection,
            }
            for c in spec.controllers
        ],
        "gains": {
            "phi_n": spec.gains.phi_n,
            "phi_g": spec.gains.phi_g,
            "phi_o": spec.gains.phi_o,
            "tau": spec.gains.tau,
            "beta": spec.gains.beta,
            "sigma_s": spec.gains.sigma_s,
            "k_neighbors": spec.gains.k_neighbors,
            "phi_max": spec.gains.phi_max,
            "phi_siphon": spec.gains.phi_siphon,
        },
        "sim": {
            "dt": spec.sim.dt,
            "perception_period": spec.sim.perception_period,
            "velocity_alpha": spec.sim.velocity_alpha,
            "max_duration": spec.sim.max_duration,
            "goal_radius": spec.sim.goal_radius,
            "collision_radius": spec.sim.collision_radius,
            "halt_on_collision": spec.sim.halt_on_collision,
            "arrival_mode": spec.sim.arrival_mode,
        },
        "perception": {
            "mode": spec.perception.mode,
            "inflation": spec.perception.inflation,
            "sense_radius": spec.perception.sense_radius,
            "camera": {
                "width": cam.width,
                "height": cam.height,
                "hfov": cam.hfov,
                "vfov": cam.vfov,
                "max_range": cam.max_range,
            },
            "grid": {
                "window": list(spec.perception.grid_spec.window),
                "resolution": spec.perception.grid_spec.resolution,
            },
        },
    }


def spec_from_dict(d: dict) -> ExperimentSpec:
    try:
        sd = d["scenario"]
        scenario = ScenarioConfig(
            kind=sd["kind"],
            seed=0,
            terrain_seed=sd.get("terrain_seed"),
            agent_count=sd["agent_count"],
            world=_box_from_dict(sd["world"]),
            start_region=_box_from_dict(sd["start_region"]),
            goal=vec3(*sd["goal"]),
            goal_jitter=vec3(*sd.get("goal_jitter", [0, 0, 0])),
            min_start_separation=sd.get("min_start_separation", 1.5),
            start_clearance=sd.get("start_clearance", 1.0),
            slab=SlabParams(**sd.get("slab", {})),
            field_=FieldParams(
                diagonal=sd.get("field", {}).get("diagonal", 2.0),
                spacing=sd.get("field", {}).get("spacing", 3.0),
                jitter=sd.get("field", {}).get("jitter", 0.5),
                region=(
                    _box_from_dict(sd["field"]["region"])
                    if sd.get("field", {}).get("region")
                    else None
                ),
            ),
            forest=ForestParams(
                coverage=sd.get("forest", {}).get("coverage", 0.25),
                area=tuple(sd.get("forest", {}).get("area", (40.0, 30.0))),
                x_offset=sd.get("forest", {}).get("x_offset", 8.0),
                trunk_radius=tuple(sd.get("forest", {}).get("trunk_radius", (0.2, 0.5))),
                tree_height=tuple(sd.get("forest", {}).get("tree_height", (7.0, 13.0))),
                foliage_radius=tuple(
                    sd.get("forest", {}).get("foliage_radius", (1.2, 2.4))
                ),
                min_tree_spacing=sd.get("forest", {}).get("min_tree_spacing", 5.5),
            ),
        )
        controllers = tuple(
            ControllerConfig(
                variant=c["variant"],
                repel_w2=c.get("repel_w2", True),
                repel_w3w4=c.get("repel_w3w4", True),
                projection=c.get("projection", "w4w3"),
            )
            for c in d["controllers"]
        )
        gains = NavGains(**d.get("gains", {}))
        sim = SimConfig(**d.get("sim", {}))
        pd = d.get("perception", {})
        cam_d = pd.get("camera", {})
        perception = PerceptionParams(
            camera=CameraModel(**cam_d) if cam_d else CameraModel(),
            grid_spec=GridSpec(
                window=tuple(pd.get("grid", {}).get("window", (20.0, 20.0, 10.0))),
                resolution=pd.get("grid", {}).get("resolution", 0.25),
            ),
            inflation=pd.get("inflation", 0.5),
            sense_radius=pd.get("sense_radius", 5.0),
            mode=pd.get("mode", "sensed"),
        )
        return ExperimentSpec(
            name=d["name"],
            scenario=scenario,
            controllers=controllers,
            runs=d.get("runs", 1),
            seed_base=d.get("seed_base", 0),
            gains=gains,
            sim=sim,
            perception=perception,
            out_dir=d.get("out_dir", "results"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment spec: {exc}") from exc


def save_spec(spec: ExperimentSpec, path: Path) -> None:
    path.write_text(
        yaml.safe_dump(spec_to_dict(spec), sort_keys=True, default_flow_style=None),
        encoding="utf-8",
    )


def load_spec(path: Path) -> ExperimentSpec:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("experiment spec must be a YAML mapping")
    return spec_from_dict(raw)


SCHEMA_TEXT = """\
Experiment specification (YAML mapping). All lengths in meters, times in
seconds, angles in radians.

name: str                       experiment label
runs: int >= 1                  episodes per controller
seed_base: int                  run i uses seed seed_base + i
out_dir: str                    artifact directory

scenario:
  kind: single_slab | random_field | forest | custom
  agent_count: int >= 1
  terrain_seed: int | null      fixes obstacle layout across runs
                                (null: layout varies with the run seed)
  world: {lo: [x,y,z], hi: [x,y,z]}
  start_region: {lo: [...], hi: [...]}
  goal: [x, y, z]
  goal_jitter: [jx, jy, jz]     per-run uniform goal perturbation
  min_start_separation: float   minimum initial agent spacing
  start_clearance: float        minimum initial distance to obstacles
  slab:   {width, thickness}                      (single_slab)
  field:  {diagonal, spacing, jitter, region}     (random_field)
  forest: {coverage, area, x_offset, trunk_radius,
           tree_height, foliage_radius, min_tree_spacing}

controllers:                    list; each entry:
  variant: goflock | baseline | siphon
  repel_w2: bool                keep nearest-point repulsion addend
  repel_w3w4: bool              keep path-axis repulsion addend
  projection: w4w3 | iw2 | off  neighbor-term stripping axis

gains:
  phi_n, phi_g, phi_o           control gains
  tau                           desired inter-agent distance
  beta                          spacing dead-zone half-width
  sigma_s                       obstacle safety distance
  k_neighbors                   neighbors per agent
  phi_max                       speed cap
  phi_siphon                    siphon pull gain

sim:
  dt, perception_period         control and perception intervals
  velocity_alpha                command tracking (1.0 = ideal)
  max_duration                  timeout
  goal_radius, arrival_mode     arrival test (centroid | all)
  collision_radius              collision event threshold
  halt_on_collision             stop run at first collision event

perception:
  mode: sensed | analytic       depth-image mapping or ground-truth raster
  inflation                     obstacle dilation radius
  sense_radius                  virtual-agent search radius
  camera: {width, height, hfov, vfov, max_range}
  grid: {window: [wx, wy, wz], resolution}
"""
