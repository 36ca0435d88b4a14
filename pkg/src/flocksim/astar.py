"""Grid A* with 26-connectivity and Euclidean edge costs.

The heuristic is the exact obstacle-free 26-connectivity distance (the 3D
generalization of octile distance). It dominates the plain Euclidean
lower bound while remaining admissible and consistent for these edge
costs, so returned paths stay cost-minimal but far fewer nodes expand.

Tie-breaking is total and deterministic: the open list orders entries by
(f, h, linear voxel index) and a node's parent only changes on a strict
cost improvement. Full-grid scratch arrays are reused across calls via
epoch stamping, which keeps per-call work proportional to the explored
region. The kernel is numba-compiled; call warmup() once per process
before timing anything.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)


def _neighbor_table() -> tuple[np.ndarray, np.ndarray]:
    offsets = []
    costs = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if di == 0 and dj == 0 and dk == 0:
                    continue
                offsets.append((di, dj, dk))
                m = abs(di) + abs(dj) + abs(dk)
                costs.append(1.0 if m == 1 else (_SQRT2 if m == 2 else _SQRT3))
    return np.array(offsets, dtype=np.int64), np.array(costs, dtype=np.float64)


_OFFSETS, _COSTS = _neighbor_table()


@njit(cache=True, inline="always")
def _lattice_distance(di, dj, dk):
    """Exact shortest-path length to offset (di,dj,dk) on an open grid."""
    a = abs(di)
    b = abs(dj)
    c = abs(dk)
    if a < b:
        a, b = b, a
    if b < c:
        b, c = c, b
    if a < b:
        a, b = b, a
    return (a - b) + _SQRT2 * (b - c) + _SQRT3 * c


@njit(cache=True, inline="always")
def _heap_less(hf, hh, hi, a, b):
    if hf[a] != hf[b]:
        return hf[a] < hf[b]
    if hh[a] != hh[b]:
        return hh[a] < hh[b]
    return hi[a] < hi[b]


@njit(cache=True)
def _sift_up(hf, hh, hi, k):
    while k > 0:
        parent = (k - 1) // 2
        if _heap_less(hf, hh, hi, k, parent):
            hf[k], hf[parent] = hf[parent], hf[k]
            hh[k], hh[parent] = hh[parent], hh[k]
            hi[k], hi[parent] = hi[parent], hi[k]
            k = parent
        else:
            break


@njit(cache=True)
def _sift_down(hf, hh, hi, size):
    k = 0
    while True:
        left = 2 * k + 1
        right = left + 1
        best = k
        if left < size and _heap_less(hf, hh, hi, left, best):
            best = left
        if right < size and _heap_less(hf, hh, hi, right, best):
            best = right
        if best == k:
            break
        hf[k], hf[best] = hf[best], hf[k]
        hh[k], hh[best] = hh[best], hh[k]
        hi[k], hi[best] = hi[best], hi[k]
        k = best


@njit(cache=True)
def _astar_core(occ, nx, ny, nz, start, goal, offsets, costs, g, parents, stamp, closed, epoch):
    """A* over the flat grid; scratch arrays are epoch-stamped. Returns
    True when the goal was reached (parents then encode the path)."""
    gi = goal // (ny * nz)
    gj = (goal // nz) % ny
    gk = goal % nz

    cap = 1 << 12
    hf = np.empty(cap)
    hh = np.empty(cap)
    hi = np.empty(cap, dtype=np.int64)

    si = start // (ny * nz)
    sj = (start // nz) % ny
    sk = start % nz
    h0 = _lattice_distance(si - gi, sj - gj, sk - gk)
    g[start] = 0.0
    stamp[start] = epoch
    parents[start] = -1
    hf[0] = h0
    hh[0] = h0
    hi[0] = start
    size = 1

    while size > 0:
        cur = hi[0]
        size -= 1
        hf[0] = hf[size]
        hh[0] = hh[size]
        hi[0] = hi[size]
        _sift_down(hf, hh, hi, size)
        if closed[cur] == epoch:
            continue
        closed[cur] = epoch
        if cur == goal:
            return True

        ci = cur // (ny * nz)
        cj = (cur // nz) % ny
        ck = cur % nz
        for m in range(offsets.shape[0]):
            ni = ci + offsets[m, 0]
            nj = cj + offsets[m, 1]
            nk = ck + offsets[m, 2]
            if ni < 0 or ni >= nx or nj < 0 or nj >= ny or nk < 0 or nk >= nz:
                continue
            nidx = (ni * ny + nj) * nz + nk
            if occ[nidx] != 0 or closed[nidx] == epoch:
                continue
            ng = g[cur] + costs[m]
            if stamp[nidx] == epoch and ng >= g[nidx]:
                continue
            g[nidx] = ng
            stamp[nidx] = epoch
            parents[nidx] = cur
            nh = _lattice_distance(ni - gi, nj - gj, nk - gk)
            if size == cap:
                cap *= 2
                nhf = np.empty(cap)
                nhh = np.empty(cap)
                nhi = np.empty(cap, dtype=np.int64)
                nhf[:size] = hf
                nhh[:size] = hh
                nhi[:size] = hi
                hf, hh, hi = nhf, nhh, nhi
            hf[size] = ng + nh
            hh[size] = nh
            hi[size] = nidx
            size += 1
            _sift_up(hf, hh, hi, size - 1)

    return False


class _Scratch:
    def __init__(self, n: int):
        self.g = np.empty(n, dtype=np.float64)
        self.parents = np.empty(n, dtype=np.int64)
        self.stamp = np.zeros(n, dtype=np.int64)
        self.closed = np.zeros(n, dtype=np.int64)
        self.epoch = 0


_SCRATCH: dict = {}


def astar_search(
    blocked: np.ndarray, start_idx: tuple, goal_idx: tuple
) -> tuple[np.ndarray, float] | None:
    """Shortest 26-connected path over a 3D blocked mask.

    Returns (indices (K, 3), cost in voxel units) or None when unreachable.
    The start voxel must be free; the caller checks that precondition.
    Not thread-safe (scratch buffers are shared per grid shape).
    """
    nx, ny, nz = blocked.shape
    start = (start_idx[0] * ny + start_idx[1]) * nz + start_idx[2]
    goal = (goal_idx[0] * ny + goal_idx[1]) * nz + goal_idx[2]
    if start == goal:
        return np.array([start_idx], dtype=np.int64), 0.0
    n = nx * ny * nz
    scratch = _SCRATCH.get(n)
    if scratch is None:
        scratch = _Scratch(n)
        _SCRATCH[n] = scratch
    scratch.epoch += 1
    occ = np.ascontiguousarray(blocked.reshape(-1).view(np.uint8))
    found = _astar_core(
        occ, nx, ny, nz, start, goal, _OFFSETS, _COSTS,
        scratch.g, scratch.parents, scratch.stamp, scratch.closed, scratch.epoch,
    )
    if not found:
        return None
    chain = [goal]
    cur = goal
    while cur != start:
        cur = int(scratch.parents[cur])
        chain.append(cur)
    chain.reverse()
    lin = np.array(chain, dtype=np.int64)
    idx = np.empty((lin.size, 3), dtype=np.int64)
    idx[:, 0] = lin // (ny * nz)
    idx[:, 1] = (lin // nz) % ny
    idx[:, 2] = lin % nz
    return idx, float(scratch.g[goal])


def warmup() -> None:
    """Compile the kernel on a tiny grid (call before forking workers)."""
    blocked = np.zeros((2, 2, 2), dtype=bool)
    astar_search(blocked, (0, 0, 0), (1, 1, 1))
