"""flocksim: deterministic 3D multi-agent flocking simulator.

A depth-sensing perception pipeline (occupancy mapping, grid planning,
waypoint and virtual-agent extraction) feeds a potential-field collective
navigation law; two reference controllers, flock metrics, and an
experiment harness round out the package.
"""

from .geometry import Box, Cylinder, Segment, Sphere, vec3
from .navigation import ControllerConfig, NavGains
from .engine import RunRecord, SimConfig, run_episode
from .perception import PerceptionOutput, PerceptionParams
from .world import CameraModel, ObstacleSet, ScenarioConfig, generate_scenario
from .metrics import evaluate_run, summarize

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CameraModel",
    "ControllerConfig",
    "Cylinder",
    "NavGains",
    "ObstacleSet",
    "PerceptionOutput",
    "PerceptionParams",
    "RunRecord",
    "ScenarioConfig",
    "Segment",
    "SimConfig",
    "Sphere",
    "evaluate_run",
    "generate_scenario",
    "run_episode",
    "summarize",
    "vec3",
    "__version__",
]
