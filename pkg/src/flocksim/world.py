"""World definition: obstacle sets, scenario generation, synthetic depth
camera, and ground-truth visibility queries.

Scenario kinds:
  single_slab   one tall thin wall between start region and goal
  random_field  jittered lattice of tall thin boxes (dense clutter)
  forest        trunk cylinders with spherical foliage at a target canopy
                coverage fraction
  custom        caller-supplied primitives

Generation is fully determined by the config seeds. Obstacle layout uses
``terrain_seed`` and per-run poses use ``seed``, so a fixed environment can
be replayed with varying start/goal placements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import (
    Box,
    Cylinder,
    Primitive,
    Sphere,
    Vec3,
    distances_to_primitive,
    norm,
    normalize,
    raycast,
    raycast_batch,
    vec3,
)

WORLD_UP = np.array([0.0, 0.0, 1.0])


class ScenarioError(ValueError):
    """Raised when a scenario config cannot be realized (e.g. overcrowded)."""


@dataclass(frozen=True)
class ObstacleSet:
    primitives: tuple
    bounds: Box

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def distance(self, p: Vec3) -> float:
        """Distance from p to the nearest obstacle (inf if none)."""
        if not self.primitives:
            return math.inf
        from .geometry import distance_to_primitive

        return min(distance_to_primitive(prim, p) for prim in self.primitives)

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Per-point distance to the nearest obstacle, shape (N,)."""
        if not self.primitives:
            return np.full(pts.shape[0], np.inf)
        d = distances_to_primitive(self.primitives[0], pts)
        for prim in self.primitives[1:]:
            d = np.minimum(d, distances_to_primitive(prim, pts))
        return d


def line_of_sight(a: Vec3, b: Vec3, obstacles: ObstacleSet) -> bool:
    """True when the open segment a->b meets no obstacle surface.

    Tangential (grazing) contact counts as blocked.
    """
    d = b - a
    dist = norm(d)
    if dist < 1e-12:
        raise ValueError("line_of_sight endpoints must differ")
    t = raycast(a, d / dist, dist, obstacles.primitives)
    return t is None


# ---------------------------------------------------------------------------
# Depth camera
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth sensor; vfov derives from hfov and aspect if omitted."""

    width: int = 64
    height: int = 48
    hfov: float = math.radians(90.0)
    vfov: Optional[float] = None
    max_range: float = 10.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be positive")
        if not (0 < self.hfov < math.pi):
            raise ValueError("horizontal FOV must be in (0, pi)")
        if self.vfov is None:
            v = 2.0 * math.atan(math.tan(self.hfov / 2.0) * self.height / self.width)
            object.__setattr__(self, "vfov", v)
        if not (0 < self.vfov < math.pi):
            raise ValueError("vertical FOV must be in (0, pi)")
        if not self.max_range > 0:
            raise ValueError("camera max_range must be > 0")


@dataclass(frozen=True)
class DepthImage:
    """Row-major range image; np.inf marks no-return pixels."""

    camera: CameraModel
    position: Vec3
    forward: Vec3
    depths: np.ndarray  # (height, width)
    rays: Optional[np.ndarray] = None  # cached per-pixel unit directions

    def __post_init__(self):
        if self.depths.shape != (self.camera.height, self.camera.width):
            raise ValueError("depth buffer shape does not match camera resolution")

    def ray_dirs(self) -> np.ndarray:
        if self.rays is not None:
            return self.rays
        return camera_rays(self.position, self.forward, self.camera)


def camera_basis(forward: Vec3) -> tuple[Vec3, Vec3, Vec3]:
    """Right-handed (forward, right, up) basis with up biased to world +z."""
    f = normalize(forward)
    r = np.cross(f, WORLD_UP)
    rn = norm(r)
    if rn < 1e-9:
        # Looking straight up/down: pick +x as the right axis.
        r = np.array([1.0, 0.0, 0.0])
    else:
        r = r / rn
    u = np.cross(r, f)
    return f, r, u


def camera_rays(position: Vec3, forward: Vec3, camera: CameraModel) -> np.ndarray:
    """Unit direction per pixel, shape (height*width, 3), row-major.

    Pixel (0, 0) is the top-left corner; directions pass through pixel
    centers.
    """
    f, r, u = camera_basis(forward)
    tan_h = math.tan(camera.hfov / 2.0)
    tan_v = math.tan(camera.vfov / 2.0)
    us = (2.0 * (np.arange(camera.width) + 0.5) / camera.width - 1.0) * tan_h
    vs = (2.0 * (np.arange(camera.height) + 0.5) / camera.height - 1.0) * tan_v
    uu, vv = np.meshgrid(us, vs)
    dirs = f + uu[..., None] * r - vv[..., None] * u
    dirs = dirs.reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def render_depth(
    position: Vec3,
    forward: Vec3,
    camera: CameraModel,
    obstacles: ObstacleSet,
) -> DepthImage:
    """Render a range image of the obstacles; other agents never appear.

    Primitives entirely beyond the sensor range are culled before the
    per-pixel raycast (exact distance test, so results are unaffected).
    """
    from .geometry import distance_to_primitive

    dirs = camera_rays(position, forward, camera)
    in_range = [
        p for p in obstacles.primitives if distance_to_primitive(p, position) <= camera.max_range
    ]
    t = raycast_batch(position, dirs, camera.max_range, in_range)
    depths = t.reshape(camera.height, camera.width)
    return DepthImage(
        camera=camera,
        position=position.copy(),
        forward=normalize(forward),
        depths=depths,
        rays=dirs,
    )


# ---------------------------------------------------------------------------
# Scenario configuration and generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabParams:
    width: float = 5.0       # footprint extent across the travel axis (y)
    thickness: float = 0.5   # footprint extent along the travel axis (x)


@dataclass(frozen=True)
class FieldParams:
    diagonal: float = 2.0    # horizontal footprint diagonal of each box
    spacing: float = 3.0     # lattice pitch between box centers
    jitter: float = 0.5      # peak-to-peak center jitter per axis
    region: Optional[Box] = None  # lattice region; defaults between start and goal


@dataclass(frozen=True)
class ForestParams:
    coverage: float = 0.25          # target horizontal canopy coverage fraction
    area: tuple = (40.0, 30.0)      # forest band extent (x_len, y_len)
    x_offset: float = 8.0           # band start along x
    trunk_radius: tuple = (0.2, 0.5)
    tree_height: tuple = (7.0, 13.0)
    foliage_radius: tuple = (1.2, 2.4)
    min_tree_spacing: float = 5.5


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "custom"
    seed: int = 0
    terrain_seed: Optional[int] = None  # defaults to seed
    agent_count: int = 9
    world: Box = field(default_factory=lambda: Box(vec3(0, 0, 0), vec3(40, 30, 16)))
    start_region: Box = field(default_factory=lambda: Box(vec3(4, 10.5, 4), vec3(10, 19.5, 8)))
    goal: Vec3 = field(default_factory=lambda: vec3(36, 15, 6))
    goal_jitter: Vec3 = field(default_factory=lambda: vec3(0.0, 3.0, 1.0))
    min_start_separation: float = 1.5
    start_clearance: float = 1.0
    slab: SlabParams = field(default_factory=SlabParams)
    field_: FieldParams = field(default_factory=FieldParams)
    forest: ForestParams = field(default_factory=ForestParams)
    custom_primitives: tuple = ()

    def __post_init__(self):
        if self.kind not in ("single_slab", "random_field", "forest", "custom"):
            raise ScenarioError(f"unknown scenario kind: {self.kind!r}")
        if self.agent_count < 1:
            raise ScenarioError("agent_count must be >= 1")


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    obstacles: ObstacleSet
    starts: np.ndarray  # (M, 3)
    goal: Vec3


def _slab_primitives(cfg: ScenarioConfig) -> list:
    w = cfg.world
    cx, cy = w.center[0], w.center[1]
    half_t = cfg.slab.thickness / 2.0
    half_w = cfg.slab.width / 2.0
    return [
        Box(
            vec3(cx - half_t, cy - half_w, w.lo[2]),
            vec3(cx + half_t, cy + half_w, w.hi[2]),
        )
    ]


def _field_primitives(cfg: ScenarioConfig, rng: np.random.Generator) -> list:
    w = cfg.world
    p = cfg.field_
    region = p.region
    if region is None:
        x0 = cfg.start_region.hi[0] + 6.0
        x1 = cfg.goal[0] - 6.0
        region = Box(vec3(x0, w.lo[1] + 3.0, w.lo[2]), vec3(x1, w.hi[1] - 3.0, w.hi[2]))
    half_side = p.diagonal / (2.0 * math.sqrt(2.0))
    xs = np.arange(region.lo[0], region.hi[0] + 1e-9, p.spacing)
    ys = np.arange(region.lo[1], region.hi[1] + 1e-9, p.spacing)
    prims = []
    for x in xs:
        for y in ys:
            jx = rng.uniform(-p.jitter / 2.0, p.jitter / 2.0)
            jy = rng.uniform(-p.jitter / 2.0, p.jitter / 2.0)
            cx, cy = x + jx, y + jy
            prims.append(
                Box(
                    vec3(cx - half_side, cy - half_side, w.lo[2]),
                    vec3(cx + half_side, cy + half_side, w.hi[2]),
                )
            )
    return prims


class _CoverageGrid:
    """Incrementally tracked union coverage of disks over a 2D band."""

    def __init__(self, band: tuple, cell: float = 0.2):
        (x0, x1), (y0, y1) = band
        xs = np.arange(x0 + cell / 2.0, x1, cell)
        ys = np.arange(y0 + cell / 2.0, y1, cell)
        self.gx, self.gy = np.meshgrid(xs, ys)
        self.covered = np.zeros(self.gx.shape, dtype=bool)

    def add_disk(self, cx: float, cy: float, r: float) -> None:
        self.covered |= (self.gx - cx) ** 2 + (self.gy - cy) ** 2 <= r * r

    @property
    def fraction(self) -> float:
        return float(self.covered.mean())


def _forest_primitives(cfg: ScenarioConfig, rng: np.random.Generator) -> list:
    w = cfg.world
    p = cfg.forest
    x0 = cfg.world.lo[0] + p.x_offset
    x1 = x0 + p.area[0]
    y0 = w.lo[1] + (w.size[1] - p.area[1]) / 2.0
    y1 = y0 + p.area[1]
    band = ((x0, x1), (y0, y1))

    prims: list = []
    centers: list = []
    cover = _CoverageGrid(band)
    coverage = 0.0
    attempts = 0
    max_attempts = 4000
    while coverage < p.coverage and attempts < max_attempts:
        attempts += 1
        cx = rng.uniform(x0 + 1.5, x1 - 1.5)
        cy = rng.uniform(y0 + 1.5, y1 - 1.5)
        if any((cx - ox) ** 2 + (cy - oy) ** 2 < p.min_tree_spacing**2 for ox, oy in centers):
            continue
        trunk_r = rng.uniform(*p.trunk_radius)
        height = rng.uniform(*p.tree_height)
        fol_r = rng.uniform(*p.foliage_radius)
        n_blobs = int(rng.integers(2, 5))
        tree_prims = [Cylinder(cx, cy, trunk_r, w.lo[2], w.lo[2] + height)]
        tree_disks = [(cx, cy, trunk_r)]
        for _ in range(n_blobs):
            bx = cx + rng.uniform(-0.9, 0.9)
            by = cy + rng.uniform(-0.9, 0.9)
            bz = w.lo[2] + height - 1.0 + rng.uniform(-1.2, 1.2)
            br = fol_r * rng.uniform(0.7, 1.0)
            tree_prims.append(Sphere(vec3(bx, by, bz), br))
            tree_disks.append((bx, by, br))
        centers.append((cx, cy))
        prims.extend(tree_prims)
        for cx_d, cy_d, r_d in tree_disks:
            cover.add_disk(cx_d, cy_d, r_d)
        coverage = cover.fraction
    if abs(coverage - p.coverage) > 0.03:
        raise ScenarioError(
            f"forest generation reached coverage {coverage:.3f}, "
            f"outside target {p.coverage:.3f} +/- 0.03"
        )
    return prims


def _sample_starts(
    cfg: ScenarioConfig, obstacles: ObstacleSet, rng: np.random.Generator
) -> np.ndarray:
    lo, hi = cfg.start_region.lo, cfg.start_region.hi
    starts: list = []
    attempts = 0
    max_attempts = 2000 * cfg.agent_count
    while len(starts) < cfg.agent_count:
        attempts += 1
        if attempts > max_attempts:
            raise ScenarioError(
                f"could not place {cfg.agent_count} agents at separation "
                f">= {cfg.min_start_separation} in the start region"
            )
        p = rng.uniform(lo, hi)
        if obstacles.distance(p) < cfg.start_clearance:
            continue
        if any(norm(p - q) < cfg.min_start_separation for q in starts):
            continue
        starts.append(p)
    return np.array(starts)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Build obstacles and agent poses for a config; deterministic per seeds."""
    terrain_seed = cfg.seed if cfg.terrain_seed is None else cfg.terrain_seed
    terrain_rng = np.random.default_rng(terrain_seed)
    pose_rng = np.random.default_rng(cfg.seed)

    if cfg.kind == "single_slab":
        prims = _slab_primitives(cfg)
    elif cfg.kind == "random_field":
        prims = _field_primitives(cfg, terrain_rng)
    elif cfg.kind == "forest":
        prims = _forest_primitives(cfg, terrain_rng)
    else:
        prims = list(cfg.custom_primitives)

    obstacles = ObstacleSet(primitives=tuple(prims), bounds=cfg.world)

    jitter = pose_rng.uniform(-cfg.goal_jitter, cfg.goal_jitter)
    goal = cfg.goal + jitter
    goal = np.minimum(np.maximum(goal, cfg.world.lo + 1.0), cfg.world.hi - 1.0)

    starts = _sample_starts(cfg, obstacles, pose_rng)
    return Scenario(config=cfg, obstacles=obstacles, starts=starts, goal=goal)


def export_primitives(obstacles: ObstacleSet) -> str:
    """Plain-text primitive list (one per line) for plotting and debugging."""
    lines = []
    for prim in obstacles.primitives:
        if isinstance(prim, Box):
            lines.append(
                "box %r %r %r %r %r %r"
                % (prim.lo[0], prim.lo[1], prim.lo[2], prim.hi[0], prim.hi[1], prim.hi[2])
            )
        elif isinstance(prim, Sphere):
            lines.append(
                "sphere %r %r %r %r"
                % (prim.center[0], prim.center[1], prim.center[2], prim.radius)
            )
        elif isinstance(prim, Cylinder):
            lines.append(
                "cylinder %r %r %r %r %r" % (prim.cx, prim.cy, prim.radius, prim.z_lo, prim.z_hi)
            )
    return "\n".join(lines) + ("\n" if lines else "")
