"""Per-agent local occupancy mapping.

Each agent owns a sliding-window voxel grid centered on itself. Depth
images carve free space along their rays and mark hit voxels occupied.
An occupied voxel reverts to free only after being observed free twice in
a row, which makes the map robust to single spurious carvings while
staying far simpler than probabilistic occupancy.

The grid origin is always snapped to the global voxel lattice, so voxel
centers are stable world points across window recenters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .geometry import Box, Cylinder, Primitive, Segment, Sphere, Vec3, vec3
from .world import DepthImage, ObstacleSet, camera_rays

UNKNOWN = np.uint8(0)
FREE = np.uint8(1)
OCCUPIED = np.uint8(2)

#: Consecutive free observations needed to clear an occupied voxel.
FREE_OBSERVATIONS_TO_CLEAR = 2


@dataclass
class GridSpec:
    """Sliding-window geometry: extent in meters and voxel resolution."""

    window: Tuple[float, float, float] = (20.0, 20.0, 10.0)
    resolution: float = 0.25

    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(round(w / self.resolution)) for w in self.window)


@dataclass
class OccupancyGrid:
    origin: Vec3                  # world position of voxel (0,0,0) low corner
    resolution: float
    cells: np.ndarray             # uint8 (nx, ny, nz)
    free_streak: np.ndarray       # uint8, consecutive free observations of occupied voxels
    inflated: bool = False

    @classmethod
    def empty(cls, spec: GridSpec, center: Vec3) -> "OccupancyGrid":
        dims = spec.dims()
        origin = _snapped_origin(spec, center)
        return cls(
            origin=origin,
            resolution=spec.resolution,
            cells=np.zeros(dims, dtype=np.uint8),
            free_streak=np.zeros(dims, dtype=np.uint8),
        )

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.cells.shape

    @property
    def extent_hi(self) -> Vec3:
        return self.origin + self.resolution * np.array(self.cells.shape, dtype=np.float64)

    def world_to_voxel(self, p: Vec3) -> Tuple[int, int, int]:
        idx = np.floor((p - self.origin) / self.resolution).astype(np.int64)
        return int(idx[0]), int(idx[1]), int(idx[2])

    def voxel_center(self, idx) -> Vec3:
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.resolution

    def in_bounds(self, idx) -> bool:
        return all(0 <= idx[k] < self.cells.shape[k] for k in range(3))

    def contains_point(self, p: Vec3) -> bool:
        return bool(np.all(p >= self.origin) and np.all(p < self.extent_hi))

    def occupied_indices(self) -> np.ndarray:
        """Indices of occupied voxels in lexicographic order, shape (K, 3)."""
        return np.argwhere(self.cells == OCCUPIED)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(
            origin=self.origin.copy(),
            resolution=self.resolution,
            cells=self.cells.copy(),
            free_streak=self.free_streak.copy(),
            inflated=self.inflated,
        )


def _snapped_origin(spec: GridSpec, center: Vec3) -> Vec3:
    half = np.array(spec.window, dtype=np.float64) / 2.0
    return spec.resolution * np.floor((center - half) / spec.resolution)


def recenter(grid: OccupancyGrid, spec: GridSpec, center: Vec3) -> OccupancyGrid:
    """Slide the window so it is centered on ``center``, keeping overlap."""
    new_origin = _snapped_origin(spec, center)
    shift = np.rint((new_origin - grid.origin) / grid.resolution).astype(np.int64)
    if np.all(shift == 0):
        return grid
    dims = grid.cells.shape
    cells = np.zeros(dims, dtype=np.uint8)
    streak = np.zeros(dims, dtype=np.uint8)
    src_lo = np.maximum(shift, 0)
    src_hi = np.minimum(np.array(dims) + shift, dims)
    if np.all(src_hi > src_lo):
        dst_lo = src_lo - shift
        dst_hi = src_hi - shift
        s = tuple(slice(int(a), int(b)) for a, b in zip(src_lo, src_hi))
        d = tuple(slice(int(a), int(b)) for a, b in zip(dst_lo, dst_hi))
        cells[d] = grid.cells[s]
        streak[d] = grid.free_streak[s]
    return OccupancyGrid(
        origin=new_origin,
        resolution=grid.resolution,
        cells=cells,
        free_streak=streak,
        inflated=grid.inflated,
    )


def _linear_indices(grid: OccupancyGrid, points: np.ndarray) -> np.ndarray:
    """Flat voxel indices of the given points; out-of-window points dropped."""
    idx = np.floor((points - grid.origin) / grid.resolution).astype(np.int64)
    dims = grid.cells.shape
    ok = (
        (idx[:, 0] >= 0) & (idx[:, 0] < dims[0])
        & (idx[:, 1] >= 0) & (idx[:, 1] < dims[1])
        & (idx[:, 2] >= 0) & (idx[:, 2] < dims[2])
    )
    idx = idx[ok]
    return (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]


@njit(cache=True)
def _observe_rays(
    origin, dirs, depths, max_range, grid_origin, res, nx, ny, nz, seen_free, seen_occ
):
    """Mark voxels observed free (carved along rays) and observed occupied
    (ray hit points) in the two flat boolean masks."""
    step = res * 0.5
    for r in range(dirs.shape[0]):
        d = depths[r]
        if math.isfinite(d):
            carve_end = d - res if d > res else 0.0
        else:
            carve_end = max_range
        t = 0.5 * step
        while t < carve_end:
            i = int(math.floor((origin[0] + t * dirs[r, 0] - grid_origin[0]) / res))
            j = int(math.floor((origin[1] + t * dirs[r, 1] - grid_origin[1]) / res))
            k = int(math.floor((origin[2] + t * dirs[r, 2] - grid_origin[2]) / res))
            if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
                seen_free[(i * ny + j) * nz + k] = True
            t += step
        if math.isfinite(d):
            i = int(math.floor((origin[0] + d * dirs[r, 0] - grid_origin[0]) / res))
            j = int(math.floor((origin[1] + d * dirs[r, 1] - grid_origin[1]) / res))
            k = int(math.floor((origin[2] + d * dirs[r, 2] - grid_origin[2]) / res))
            if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
                seen_occ[(i * ny + j) * nz + k] = True


def integrate_depth(grid: OccupancyGrid, img: DepthImage) -> OccupancyGrid:
    """Fuse one depth image into the grid (returns a new grid).

    Free space is carved along every ray up to its hit (or max range for
    no-return rays); hit voxels are marked occupied. Occupied voxels
    observed free accumulate a streak and clear after two consecutive
    free observations.
    """
    if grid.inflated:
        raise ValueError("cannot integrate into an inflated grid")
    out = grid.copy()
    nx, ny, nz = out.cells.shape
    dirs = img.ray_dirs()
    depths = img.depths.reshape(-1)

    seen_free = np.zeros(out.cells.size, dtype=np.bool_)
    seen_occ = np.zeros(out.cells.size, dtype=np.bool_)
    _observe_rays(
        img.position, dirs, depths, img.camera.max_range,
        out.origin, out.resolution, nx, ny, nz, seen_free, seen_occ,
    )
    seen_free &= ~seen_occ  # a voxel both carved and hit this frame stays occupied

    cells = out.cells.reshape(-1)
    streak = out.free_streak.reshape(-1)

    occ_seen_free = seen_free & (cells == OCCUPIED)
    other_seen_free = seen_free & (cells != OCCUPIED)
    streak[occ_seen_free] += 1
    cleared = occ_seen_free & (streak >= FREE_OBSERVATIONS_TO_CLEAR)
    cells[cleared] = FREE
    streak[cleared] = 0
    cells[other_seen_free] = FREE
    streak[other_seen_free] = 0

    cells[seen_occ] = OCCUPIED
    streak[seen_occ] = 0
    return out


def inflation_offsets(delta: float, resolution: float) -> np.ndarray:
    """Voxel-offset ball: all integer offsets within delta meters, (K, 3)."""
    r = int(math.floor(delta / resolution + 1e-9))
    ax = np.arange(-r, r + 1)
    ox, oy, oz = np.meshgrid(ax, ax, ax, indexing="ij")
    keep = (ox * ox + oy * oy + oz * oz) * resolution * resolution <= delta * delta + 1e-12
    return np.stack([ox[keep], oy[keep], oz[keep]], axis=1).astype(np.int64)


@njit(cache=True)
def _scatter_dilate(cells, occ_idx, offs):
    nx, ny, nz = cells.shape
    for a in range(occ_idx.shape[0]):
        for m in range(offs.shape[0]):
            i = occ_idx[a, 0] + offs[m, 0]
            j = occ_idx[a, 1] + offs[m, 1]
            k = occ_idx[a, 2] + offs[m, 2]
            if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
                cells[i, j, k] = OCCUPIED


def inflate(grid: OccupancyGrid, delta: float) -> OccupancyGrid:
    """Dilate occupied space by a Euclidean ball of radius delta (meters)."""
    if delta < 0:
        raise ValueError("inflation margin must be >= 0")
    if grid.inflated:
        raise ValueError("grid is already inflated")
    cells = grid.cells.copy()
    occ_idx = grid.occupied_indices()
    if delta > 0 and occ_idx.size:
        _scatter_dilate(cells, occ_idx, inflation_offsets(delta, grid.resolution))
    return OccupancyGrid(
        origin=grid.origin.copy(),
        resolution=grid.resolution,
        cells=cells,
        free_streak=np.zeros_like(grid.free_streak),
        inflated=True,
    )


def _occupied_near(grid: OccupancyGrid, p: Vec3, max_radius: float) -> np.ndarray:
    """Occupied voxel indices within the bounding cube of radius max_radius
    around p, lexicographic order, shape (K, 3). Cheap sub-window scan."""
    dims = grid.cells.shape
    lo = np.floor((p - max_radius - grid.origin) / grid.resolution).astype(np.int64)
    hi = np.floor((p + max_radius - grid.origin) / grid.resolution).astype(np.int64) + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, dims)
    if np.any(hi <= lo):
        return np.empty((0, 3), dtype=np.int64)
    sub = grid.cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    idx = np.argwhere(sub == OCCUPIED)
    return idx + lo


def nearest_occupied(grid: OccupancyGrid, p: Vec3, max_radius: float) -> Optional[Vec3]:
    """Center of the occupied voxel nearest to p within max_radius.

    Ties resolve to the lexicographically smallest voxel index.
    """
    idx = _occupied_near(grid, p, max_radius)
    if idx.size == 0:
        return None
    centers = grid.origin + (idx + 0.5) * grid.resolution
    d2 = np.einsum("ij,ij->i", centers - p, centers - p)
    best = int(np.argmin(d2))
    if d2[best] > max_radius * max_radius:
        return None
    return centers[best]


def nearest_occupied_to_segment(
    grid: OccupancyGrid, seg: Segment, around: Vec3, max_radius: float
) -> Optional[Vec3]:
    """Occupied voxel center closest to the segment, searched within
    max_radius of ``around``; ties resolve lexicographically."""
    idx = _occupied_near(grid, around, max_radius)
    if idx.size == 0:
        return None
    centers = grid.origin + (idx + 0.5) * grid.resolution
    in_range = np.einsum("ij,ij->i", centers - around, centers - around) <= max_radius * max_radius
    if not in_range.any():
        return None
    centers = centers[in_range]
    d = seg.b - seg.a
    dd = float(np.dot(d, d))
    if dd < 1e-24:
        d2 = np.einsum("ij,ij->i", centers - seg.a, centers - seg.a)
    else:
        t = np.clip((centers - seg.a) @ d / dd, 0.0, 1.0)
        proj = seg.a + t[:, None] * d
        d2 = np.einsum("ij,ij->i", centers - proj, centers - proj)
    return centers[int(np.argmin(d2))]


@njit(cache=True)
def _segment_blocked(cells, origin, res, a, b, n):
    """True if any of the n+1 uniform samples of a->b lands in an occupied
    voxel; out-of-window samples count as free."""
    nx, ny, nz = cells.shape
    for s in range(n + 1):
        t = s / n
        x = a[0] + t * (b[0] - a[0])
        y = a[1] + t * (b[1] - a[1])
        z = a[2] + t * (b[2] - a[2])
        i = int(math.floor((x - origin[0]) / res))
        j = int(math.floor((y - origin[1]) / res))
        k = int(math.floor((z - origin[2]) / res))
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz and cells[i, j, k] == OCCUPIED:
            return True
    return False


def grid_line_free(grid: OccupancyGrid, a: Vec3, b: Vec3) -> bool:
    """True when no occupied voxel lies along the segment a->b.

    Unknown voxels and voxels outside the window count as free. Sampled at
    half-voxel steps, endpoints included.
    """
    d = b - a
    length = float(np.linalg.norm(d))
    if length < 1e-12:
        idx = grid.world_to_voxel(a)
        return not (grid.in_bounds(idx) and grid.cells[idx] == OCCUPIED)
    n = int(math.ceil(length / (grid.resolution * 0.5))) + 1
    return not _segment_blocked(grid.cells, grid.origin, grid.resolution, a, b, n)


def rasterize_obstacles(spec: GridSpec, center: Vec3, obstacles: ObstacleSet) -> OccupancyGrid:
    """Ground-truth occupancy of the window: voxels whose center lies inside
    a primitive are occupied, everything else free. Used by the analytic
    perception mode and tests."""
    grid = OccupancyGrid.empty(spec, center)
    grid.cells[:] = FREE
    dims = grid.cells.shape
    res = grid.resolution
    lo = grid.origin
    hi = grid.extent_hi
    for prim in obstacles.primitives:
        if isinstance(prim, Box):
            blo, bhi = prim.lo, prim.hi
        elif isinstance(prim, Sphere):
            blo = prim.center - prim.radius
            bhi = prim.center + prim.radius
        elif isinstance(prim, Cylinder):
            blo = np.array([prim.cx - prim.radius, prim.cy - prim.radius, prim.z_lo])
            bhi = np.array([prim.cx + prim.radius, prim.cy + prim.radius, prim.z_hi])
        else:
            raise TypeError(f"unknown primitive type: {type(prim)!r}")
        if np.any(blo >= hi) or np.any(bhi <= lo):
            continue
        i0 = np.maximum(np.floor((blo - lo) / res).astype(int), 0)
        i1 = np.minimum(np.ceil((bhi - lo) / res).astype(int), dims)
        ax = lo[0] + (np.arange(i0[0], i1[0]) + 0.5) * res
        ay = lo[1] + (np.arange(i0[1], i1[1]) + 0.5) * res
        az = lo[2] + (np.arange(i0[2], i1[2]) + 0.5) * res
        gx, gy, gz = np.meshgrid(ax, ay, az, indexing="ij")
        if isinstance(prim, Box):
            inside = (
                (gx >= prim.lo[0]) & (gx <= prim.hi[0])
                & (gy >= prim.lo[1]) & (gy <= prim.hi[1])
                & (gz >= prim.lo[2]) & (gz <= prim.hi[2])
            )
        elif isinstance(prim, Sphere):
            inside = (
                (gx - prim.center[0]) ** 2
                + (gy - prim.center[1]) ** 2
                + (gz - prim.center[2]) ** 2
            ) <= prim.radius**2
        else:
            inside = (
                ((gx - prim.cx) ** 2 + (gy - prim.cy) ** 2 <= prim.radius**2)
                & (gz >= prim.z_lo)
                & (gz <= prim.z_hi)
            )
        sub = grid.cells[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
        sub[inside] = OCCUPIED
    return grid


def dump_voxels(grid: OccupancyGrid) -> str:
    """Plain-text voxel list ``x y z state`` for known (non-unknown) voxels."""
    names = {int(FREE): "free", int(OCCUPIED): "occupied"}
    lines = []
    for idx in np.argwhere(grid.cells != UNKNOWN):
        c = grid.voxel_center(idx)
        lines.append("%r %r %r %s" % (c[0], c[1], c[2], names[int(grid.cells[tuple(idx)])]))
    return "\n".join(lines) + ("\n" if lines else "")
