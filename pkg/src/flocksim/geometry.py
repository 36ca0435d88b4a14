"""Exact 3D vector and primitive geometry.

Points and vectors are float64 numpy arrays of shape (3,). Obstacles are
axis-aligned boxes, vertical cylinders, and spheres. All queries are pure
functions; the batched raycast variants are elementwise identical to the
scalar ones and exist for the depth renderer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

Vec3 = np.ndarray

#: Tolerance for a point to count as lying on a primitive surface (meters).
SURFACE_TOL = 1e-6
#: Minimum ray parameter for a hit; excludes the ray origin itself.
RAY_EPS = 1e-9


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def norm(v: Vec3) -> float:
    return math.sqrt(float(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))


def normalize(v: Vec3) -> Vec3:
    """Unit vector along v. Raises ValueError for (near-)zero vectors."""
    n = norm(v)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


def check_finite(v: Vec3, what: str = "vector") -> Vec3:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{what} must be a finite 3-vector, got {v!r}")
    return v


@dataclass(frozen=True)
class Segment:
    """Closed segment between two endpoints; a == b is allowed."""

    a: Vec3
    b: Vec3

    def __post_init__(self):
        object.__setattr__(self, "a", check_finite(self.a, "segment endpoint a"))
        object.__setattr__(self, "b", check_finite(self.b, "segment endpoint b"))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] componentwise."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        lo = check_finite(self.lo, "box lo")
        hi = check_finite(self.hi, "box hi")
        if np.any(lo > hi):
            raise ValueError(f"box lo must be <= hi componentwise: {lo} vs {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> Vec3:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> Vec3:
        return self.hi - self.lo

    def contains(self, p: Vec3) -> bool:
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", check_finite(self.center, "sphere center"))
        if not (self.radius > 0):
            raise ValueError(f"sphere radius must be > 0, got {self.radius}")

    def contains(self, p: Vec3) -> bool:
        return norm(p - self.center) <= self.radius


@dataclass(frozen=True)
class Cylinder:
    """Vertical (z-axis aligned) closed cylinder with flat caps."""

    cx: float
    cy: float
    radius: float
    z_lo: float
    z_hi: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.radius, self.z_lo, self.z_hi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"cylinder parameters must be finite: {vals}")
        if not (self.radius > 0):
            raise ValueError(f"cylinder radius must be > 0, got {self.radius}")
        if self.z_lo > self.z_hi:
            raise ValueError("cylinder z_lo must be <= z_hi")

    def contains(self, p: Vec3) -> bool:
        dx = p[0] - self.cx
        dy = p[1] - self.cy
        return (dx * dx + dy * dy) <= self.radius * self.radius and self.z_lo <= p[2] <= self.z_hi


Primitive = Union[Box, Sphere, Cylinder]


# ---------------------------------------------------------------------------
# Nearest-point queries
# ---------------------------------------------------------------------------

def nearest_point_on_segment(seg: Segment, p: Vec3) -> Vec3:
    """Point of the segment closest to p; seg.a for degenerate segments."""
    d = seg.b - seg.a
    dd = float(np.dot(d, d))
    if dd < 1e-24:
        return seg.a.copy()
    t = float(np.dot(p - seg.a, d)) / dd
    t = min(max(t, 0.0), 1.0)
    return seg.a + t * d


def _nearest_on_box(box: Box, p: Vec3) -> Vec3:
    q = np.minimum(np.maximum(p, box.lo), box.hi)
    if not np.array_equal(q, p):
        return q
    # Interior point: push to the closest face; ties resolve in fixed
    # axis/side order (x-, x+, y-, y+, z-, z+).
    best_axis, best_side, best_d = 0, 0, math.inf
    for axis in range(3):
        for side, d in ((0, p[axis] - box.lo[axis]), (1, box.hi[axis] - p[axis])):
            if d < best_d:
                best_axis, best_side, best_d = axis, side, d
    q = p.copy()
    q[best_axis] = box.lo[best_axis] if best_side == 0 else box.hi[best_axis]
    return q


def _nearest_on_sphere(s: Sphere, p: Vec3) -> Vec3:
    r = p - s.center
    n = norm(r)
    if n < 1e-12:
        return s.center + vec3(s.radius, 0.0, 0.0)
    return s.center + (s.radius / n) * r


def _nearest_on_cylinder(c: Cylinder, p: Vec3) -> Vec3:
    dx, dy = p[0] - c.cx, p[1] - c.cy
    rho = math.sqrt(dx * dx + dy * dy)
    inside_r = rho <= c.radius
    inside_z = c.z_lo <= p[2] <= c.z_hi

    if not (inside_r and inside_z):
        # Exterior: clamp radially and vertically onto the solid.
        z = min(max(p[2], c.z_lo), c.z_hi)
        if rho > c.radius:
            scale = c.radius / rho
            return vec3(c.cx + dx * scale, c.cy + dy * scale, z)
        return vec3(p[0], p[1], z)

    # Interior: closest of lateral surface and the two caps, in that order.
    if rho < 1e-12:
        ux, uy = 1.0, 0.0
    else:
        ux, uy = dx / rho, dy / rho
    side = (c.radius - rho, vec3(c.cx + ux * c.radius, c.cy + uy * c.radius, p[2]))
    bottom = (p[2] - c.z_lo, vec3(p[0], p[1], c.z_lo))
    top = (c.z_hi - p[2], vec3(p[0], p[1], c.z_hi))
    best = side
    for cand in (bottom, top):
        if cand[0] < best[0]:
            best = cand
    return best[1]


def nearest_point_on_primitive(prim: Primitive, p: Vec3) -> Vec3:
    """Closest point of the primitive's closed surface to p.

    Interior query points are projected outward to the nearest surface
    point, so the result is defined everywhere.
    """
    if isinstance(prim, Box):
        return _nearest_on_box(prim, p)
    if isinstance(prim, Sphere):
        return _nearest_on_sphere(prim, p)
    if isinstance(prim, Cylinder):
        return _nearest_on_cylinder(prim, p)
    raise TypeError(f"unknown primitive type: {type(prim)!r}")


def distance_to_primitive(prim: Primitive, p: Vec3) -> float:
    """Distance from p to the solid primitive (0 for interior points)."""
    if isinstance(prim, Box):
        q = np.minimum(np.maximum(p, prim.lo), prim.hi)
        return norm(p - q)
    if isinstance(prim, Sphere):
        return max(0.0, norm(p - prim.center) - prim.radius)
    if isinstance(prim, Cylinder):
        dx, dy = p[0] - prim.cx, p[1] - prim.cy
        dr = max(0.0, math.sqrt(dx * dx + dy * dy) - prim.radius)
        dz = max(0.0, prim.z_lo - p[2], p[2] - prim.z_hi)
        return math.sqrt(dr * dr + dz * dz)
    raise TypeError(f"unknown primitive type: {type(prim)!r}")


def distances_to_primitive(prim: Primitive, pts: np.ndarray) -> np.ndarray:
    """Vectorized distance_to_primitive over points of shape (N, 3)."""
    if isinstance(prim, Box):
        q = np.clip(pts, prim.lo, prim.hi)
        return np.linalg.norm(pts - q, axis=1)
    if isinstance(prim, Sphere):
        return np.maximum(0.0, np.linalg.norm(pts - prim.center, axis=1) - prim.radius)
    if isinstance(prim, Cylinder):
        dx = pts[:, 0] - prim.cx
        dy = pts[:, 1] - prim.cy
        dr = np.maximum(0.0, np.sqrt(dx * dx + dy * dy) - prim.radius)
        dz = np.maximum(0.0, np.maximum(prim.z_lo - pts[:, 2], pts[:, 2] - prim.z_hi))
        return np.sqrt(dr * dr + dz * dz)
    raise TypeError(f"unknown primitive type: {type(prim)!r}")


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def _ray_box(o: Vec3, d: Vec3, box: Box) -> float:
    tmin, tmax = -math.inf, math.inf
    for axis in range(3):
        if d[axis] != 0.0:
            t1 = (box.lo[axis] - o[axis]) / d[axis]
            t2 = (box.hi[axis] - o[axis]) / d[axis]
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
        elif o[axis] < box.lo[axis] or o[axis] > box.hi[axis]:
            return math.inf
    if tmax < max(tmin, RAY_EPS):
        return math.inf
    return tmin if tmin > RAY_EPS else tmax


def _ray_sphere(o: Vec3, d: Vec3, s: Sphere) -> float:
    oc = o - s.center
    b = float(np.dot(oc, d))
    c0 = float(np.dot(oc, oc)) - s.radius * s.radius
    disc = b * b - c0
    if disc < 0.0:
        return math.inf
    sq = math.sqrt(disc)
    t1, t2 = -b - sq, -b + sq
    if t1 > RAY_EPS:
        return t1
    if t2 > RAY_EPS:
        return t2
    return math.inf


def _ray_cylinder(o: Vec3, d: Vec3, c: Cylinder) -> float:
    best = math.inf
    ox, oy, oz = o[0] - c.cx, o[1] - c.cy, o[2]
    a = d[0] * d[0] + d[1] * d[1]
    if a > 1e-16:
        b = ox * d[0] + oy * d[1]
        c0 = ox * ox + oy * oy - c.radius * c.radius
        disc = b * b - a * c0
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for t in ((-b - sq) / a, (-b + sq) / a):
                if t > RAY_EPS and c.z_lo <= oz + t * d[2] <= c.z_hi:
                    best = min(best, t)
    if d[2] != 0.0:
        r2 = c.radius * c.radius
        for z_plane in (c.z_lo, c.z_hi):
            t = (z_plane - oz) / d[2]
            if t > RAY_EPS:
                px, py = ox + t * d[0], oy + t * d[1]
                if px * px + py * py <= r2:
                    best = min(best, t)
    return best


def raycast(
    origin: Vec3,
    direction: Vec3,
    max_range: float,
    primitives: Iterable[Primitive],
) -> Optional[float]:
    """Smallest t in (0, max_range] where origin + t*direction meets a surface.

    Returns None on miss. The direction must be a unit vector; max_range > 0.
    """
    if abs(norm(direction) - 1.0) > 1e-6:
        raise ValueError("raycast direction must be a unit vector")
    if not max_range > 0:
        raise ValueError("raycast max_range must be > 0")
    best = math.inf
    for prim in primitives:
        if isinstance(prim, Box):
            t = _ray_box(origin, direction, prim)
        elif isinstance(prim, Sphere):
            t = _ray_sphere(origin, direction, prim)
        elif isinstance(prim, Cylinder):
            t = _ray_cylinder(origin, direction, prim)
        else:
            raise TypeError(f"unknown primitive type: {type(prim)!r}")
        if t < best:
            best = t
    if best <= max_range:
        return best
    return None


def _ray_box_batch(o: Vec3, dirs: np.ndarray, box: Box) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (box.lo - o) / dirs
        t2 = (box.hi - o) / dirs
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    zero = dirs == 0.0
    if np.any(zero):
        inside = (o >= box.lo) & (o <= box.hi)
        lo = np.where(zero, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(zero, np.where(inside, np.inf, -np.inf), hi)
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    hit = tmax >= np.maximum(tmin, RAY_EPS)
    t = np.where(tmin > RAY_EPS, tmin, tmax)
    return np.where(hit, t, np.inf)


def _ray_sphere_batch(o: Vec3, dirs: np.ndarray, s: Sphere) -> np.ndarray:
    oc = o - s.center
    b = dirs @ oc
    c0 = float(np.dot(oc, oc)) - s.radius * s.radius
    disc = b * b - c0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 > RAY_EPS, t1, t2)
    return np.where((disc >= 0.0) & (t > RAY_EPS), t, np.inf)


def _ray_cylinder_batch(o: Vec3, dirs: np.ndarray, c: Cylinder) -> np.ndarray:
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    ox, oy, oz = o[0] - c.cx, o[1] - c.cy, o[2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c0 = ox * ox + oy * oy - c.radius * c.radius
    disc = b * b - a * c0
    ok = (a > 1e-16) & (disc >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for t in ((-b - sq) / a, (-b + sq) / a):
            z = oz + t * dz
            valid = ok & (t > RAY_EPS) & (z >= c.z_lo) & (z <= c.z_hi)
            best = np.where(valid & (t < best), t, best)
        r2 = c.radius * c.radius
        for z_plane in (c.z_lo, c.z_hi):
            t = (z_plane - oz) / dz
            px = ox + t * dx
            py = oy + t * dy
            valid = (dz != 0.0) & (t > RAY_EPS) & (px * px + py * py <= r2)
            best = np.where(valid & (t < best), t, best)
    return best


def raycast_batch(
    origin: Vec3,
    dirs: np.ndarray,
    max_range: float,
    primitives: Iterable[Primitive],
) -> np.ndarray:
    """Vectorized raycast for N unit directions from one origin.

    Returns an array of shape (N,) of hit ranges, np.inf for misses or hits
    beyond max_range. Agrees with the scalar raycast per ray.
    """
    best = np.full(dirs.shape[0], np.inf)
    for prim in primitives:
        if isinstance(prim, Box):
            t = _ray_box_batch(origin, dirs, prim)
        elif isinstance(prim, Sphere):
            t = _ray_sphere_batch(origin, dirs, prim)
        elif isinstance(prim, Cylinder):
            t = _ray_cylinder_batch(origin, dirs, prim)
        else:
            raise TypeError(f"unknown primitive type: {type(prim)!r}")
        best = np.minimum(best, t)
    return np.where(best <= max_range, best, np.inf)
