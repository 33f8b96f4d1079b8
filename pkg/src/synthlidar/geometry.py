"""Triangle soups, ray/triangle intersection and a BVH for nearest-hit queries.

Triangles are stored as an ``(N, 3, 3)`` float64 array (vertex, xyz) plus an
``(N,)`` array of owning object references. All heavy loops are numba kernels;
the Python-level helpers wrap them for single-ray use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba as nb
import numpy as np

# hits with t <= EPS_T are discarded (sensor sitting on the ego mesh)
EPS_T = 1e-4
LEAF_SIZE = 4
_STACK_SIZE = 128
_CHUNK = 1024  # rays per parallel work item

_jit = dict(cache=True, error_model="numpy")

# TBB in this environment is too old; workqueue is always available
nb.config.THREADING_LAYER = "workqueue"


class Hit(NamedTuple):
    t: float
    point: np.ndarray
    object_ref: int
    triangle_index: int


@dataclass(frozen=True)
class Bvh:
    """Flattened bounding volume hierarchy.

    Internal nodes have ``count == 0`` and children ``left``/``right``; leaves
    cover ``order[left:left + count]``. Triangle data is stored in leaf order
    so traversal touches contiguous memory.
    """

    box_min: np.ndarray  # (M, 3)
    box_max: np.ndarray  # (M, 3)
    left: np.ndarray  # (M,) int64
    right: np.ndarray  # (M,) int64
    count: np.ndarray  # (M,) int64
    order: np.ndarray  # (N,) original triangle index per slot
    v0: np.ndarray  # (N, 3) in slot order
    e1: np.ndarray  # (N, 3)
    e2: np.ndarray  # (N, 3)
    nn: np.ndarray  # (N,) normal length |e1 x e2|
    object_refs: np.ndarray  # (N,) in slot order

    @property
    def n_triangles(self) -> int:
        return len(self.order)

    @property
    def n_nodes(self) -> int:
        return len(self.count)


def as_triangles(triangles) -> np.ndarray:
    tris = np.ascontiguousarray(triangles, dtype=np.float64)
    if tris.size == 0:
        return np.zeros((0, 3, 3))
    if tris.ndim != 3 or tris.shape[1:] != (3, 3):
        raise ValueError(f"expected (N, 3, 3) triangles, got shape {tris.shape}")
    return tris


@nb.njit(**_jit)
def _normal_length(e1, e2):
    nx = e1[1] * e2[2] - e1[2] * e2[1]
    ny = e1[2] * e2[0] - e1[0] * e2[2]
    nz = e1[0] * e2[1] - e1[1] * e2[0]
    return np.sqrt(nx * nx + ny * ny + nz * nz)


@nb.njit(**_jit)
def _normal_lengths(e1, e2):
    out = np.empty(e1.shape[0])
    for i in range(e1.shape[0]):
        out[i] = _normal_length(e1[i], e2[i])
    return out


@nb.njit(**_jit)
def _intersect(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    """Moller-Trumbore; returns t or -1.0 on a miss. Both faces count."""
    return _intersect_nn(ox, oy, oz, dx, dy, dz, v0, e1, e2, _normal_length(e1, e2))


@nb.njit(**_jit)
def _intersect_nn(ox, oy, oz, dx, dy, dz, v0, e1, e2, nn):
    """:func:`_intersect` with the triangle's normal length precomputed."""
    return _mt(ox, oy, oz, dx, dy, dz, v0[0], v0[1], v0[2], e1[0], e1[1], e1[2],
               e2[0], e2[1], e2[2], nn)


@nb.njit(**_jit)
def _mt(ox, oy, oz, dx, dy, dz, ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z, nn):
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if nn == 0.0 or abs(det) <= 1e-12 * nn:
        return -1.0
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@nb.njit(**_jit)
def _better(t, obj, idx, best_t, best_obj, best_idx):
    if t < best_t:
        return True
    if t == best_t:
        if obj < best_obj:
            return True
        if obj == best_obj and idx < best_idx:
            return True
    return False


@nb.njit(**_jit)
def _linear_scan(origins, dirs, v0, e1, e2, object_refs, t_max, out_t, out_idx):
    n = v0.shape[0]
    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best_t = np.inf
        best_obj = np.iinfo(np.int64).max
        best_idx = -1
        for i in range(n):
            t = _intersect(ox, oy, oz, dx, dy, dz, v0[i], e1[i], e2[i])
            if t > EPS_T and t <= t_max:
                if _better(t, object_refs[i], i, best_t, best_obj, best_idx):
                    best_t = t
                    best_obj = object_refs[i]
                    best_idx = i
        out_t[r] = best_t if best_idx >= 0 else np.nan
        out_idx[r] = best_idx


@nb.njit(**_jit)
def _build(tris):
    n = tris.shape[0]
    cent = np.empty((n, 3))
    lo = np.empty((n, 3))
    hi = np.empty((n, 3))
    for i in range(n):
        for a in range(3):
            x0, x1, x2 = tris[i, 0, a], tris[i, 1, a], tris[i, 2, a]
            lo[i, a] = min(x0, x1, x2)
            hi[i, a] = max(x0, x1, x2)
            cent[i, a] = (x0 + x1 + x2) / 3.0

    order = np.arange(n)
    cap = max(1, 2 * n)
    box_min = np.empty((cap, 3))
    box_max = np.empty((cap, 3))
    left = np.zeros(cap, dtype=np.int64)
    right = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    if n == 0:
        return box_min[:0], box_max[:0], left[:0], right[:0], count[:0], order

    # work stack of (node, start, end)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0], st_start[0], st_end[0] = 0, 0, n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, s, e = st_node[sp], st_start[sp], st_end[sp]
        bmin = np.full(3, np.inf)
        bmax = np.full(3, -np.inf)
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for k in range(s, e):
            i = order[k]
            for a in range(3):
                bmin[a] = min(bmin[a], lo[i, a])
                bmax[a] = max(bmax[a], hi[i, a])
                cmin[a] = min(cmin[a], cent[i, a])
                cmax[a] = max(cmax[a], cent[i, a])
        # pad so slab tests never reject hits lying on a box face
        for a in range(3):
            pad = 1e-9 * (1.0 + max(abs(bmin[a]), abs(bmax[a])))
            box_min[node, a] = bmin[a] - pad
            box_max[node, a] = bmax[a] + pad
        if e - s <= LEAF_SIZE:
            left[node] = s
            count[node] = e - s
            continue
        axis = 0
        ext = cmax[0] - cmin[0]
        for a in range(1, 3):
            if cmax[a] - cmin[a] > ext:
                ext = cmax[a] - cmin[a]
                axis = a
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for k in range(e - s):
            keys[k] = cent[seg[k], axis]
        srt = np.argsort(keys, kind="mergesort")
        for k in range(e - s):
            order[s + k] = seg[srt[k]]
        mid = s + (e - s) // 2
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        count[node] = 0
        st_node[sp], st_start[sp], st_end[sp] = rc, mid, e
        sp += 1
        st_node[sp], st_start[sp], st_end[sp] = lc, s, mid
        sp += 1
    return (box_min[:n_nodes], box_max[:n_nodes], left[:n_nodes],
            right[:n_nodes], count[:n_nodes], order)


@nb.njit(**_jit)
def _axis(o, inv, d, lo, hi, t0, t1):
    if d == 0.0:
        if o < lo or o > hi:
            return np.inf, -np.inf
        return t0, t1
    ta = (lo - o) * inv
    tb = (hi - o) * inv
    if ta > tb:
        ta, tb = tb, ta
    return max(t0, ta), min(t1, tb)


@nb.njit(**_jit)
def _slab(ox, oy, oz, ix, iy, iz, dx, dy, dz, box_min, box_max, node, t_hi):
    """Entry distance into box ``node``, or inf when the ray misses it before t_hi."""
    t0, t1 = _axis(ox, ix, dx, box_min[node, 0], box_max[node, 0], 0.0, t_hi)
    if t0 > t1:
        return np.inf
    t0, t1 = _axis(oy, iy, dy, box_min[node, 1], box_max[node, 1], t0, t1)
    if t0 > t1:
        return np.inf
    t0, t1 = _axis(oz, iz, dz, box_min[node, 2], box_max[node, 2], t0, t1)
    if t0 > t1:
        return np.inf
    return t0


@nb.njit(**_jit)
def _nearest(ox, oy, oz, dx, dy, dz, t_max, box_min, box_max, left, right,
             count, v0, e1, e2, nn, object_refs, order, stack, tstack):
    best_t = np.inf
    best_obj = np.iinfo(np.int64).max
    best_idx = -1
    if count.shape[0] == 0:
        return np.nan, -1
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    # boxes are tested against a slightly inflated limit; exact checks happen per triangle
    lim = t_max * (1.0 + 1e-9) + 1e-9
    if _slab(ox, oy, oz, ix, iy, iz, dx, dy, dz, box_min, box_max, 0, lim) == np.inf:
        return np.nan, -1
    stack[0] = 0
    tstack[0] = 0.0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # a closer hit may have been found since this node was pushed
        if tstack[sp] > best_t * (1.0 + 1e-9) + 1e-9:
            continue
        c = count[node]
        if c > 0:
            s = left[node]
            for k in range(s, s + c):
                t = _mt(ox, oy, oz, dx, dy, dz, v0[k, 0], v0[k, 1], v0[k, 2], e1[k, 0], e1[k, 1],
                        e1[k, 2], e2[k, 0], e2[k, 1], e2[k, 2], nn[k])
                if t > EPS_T and t <= t_max:
                    idx = order[k]
                    if _better(t, object_refs[k], idx, best_t, best_obj, best_idx):
                        best_t = t
                        best_obj = object_refs[k]
                        best_idx = idx
            continue
        hi = min(lim, best_t * (1.0 + 1e-9) + 1e-9)
        a = left[node]
        b = right[node]
        ta = _slab(ox, oy, oz, ix, iy, iz, dx, dy, dz, box_min, box_max, a, hi)
        tb = _slab(ox, oy, oz, ix, iy, iz, dx, dy, dz, box_min, box_max, b, hi)
        # push the farther child first so the nearer one is popped next
        if ta <= tb:
            if tb != np.inf:
                stack[sp], tstack[sp] = b, tb
                sp += 1
            if ta != np.inf:
                stack[sp], tstack[sp] = a, ta
                sp += 1
        else:
            if ta != np.inf:
                stack[sp], tstack[sp] = a, ta
                sp += 1
            if tb != np.inf:
                stack[sp], tstack[sp] = b, tb
                sp += 1
    if best_idx < 0:
        return np.nan, -1
    return best_t, best_idx


@nb.njit(parallel=True, **_jit)
def _trace(origins, dirs, t_max, box_min, box_max, left, right, count, v0, e1,
           e2, nn, object_refs, order, out_t, out_idx):
    n = origins.shape[0]
    n_chunks = (n + _CHUNK - 1) // _CHUNK
    for c in nb.prange(n_chunks):
        stack = np.empty(_STACK_SIZE, dtype=np.int64)
        tstack = np.empty(_STACK_SIZE)
        for r in range(c * _CHUNK, min(n, (c + 1) * _CHUNK)):
            t, idx = _nearest(origins[r, 0], origins[r, 1], origins[r, 2],
                              dirs[r, 0], dirs[r, 1], dirs[r, 2], t_max,
                              box_min, box_max, left, right, count, v0, e1, e2, nn,
                              object_refs, order, stack, tstack)
            out_t[r] = t
            out_idx[r] = idx


def _edges(tris: np.ndarray):
    v0 = np.ascontiguousarray(tris[:, 0])
    e1 = np.ascontiguousarray(tris[:, 1] - tris[:, 0])
    e2 = np.ascontiguousarray(tris[:, 2] - tris[:, 0])
    return v0, e1, e2


def ray_triangle(origin, direction, triangle) -> Optional[tuple[float, np.ndarray]]:
    """Intersect one ray with one triangle.

    Returns ``(t, point)`` for a hit with ``t > EPS_T`` on either face,
    including edges, and ``None`` otherwise. Degenerate triangles never hit.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    tri = np.asarray(triangle, dtype=np.float64)
    t = _intersect(o[0], o[1], o[2], d[0], d[1], d[2], tri[0], tri[1] - tri[0], tri[2] - tri[0])
    if t > EPS_T:
        return float(t), o + t * d
    return None


def build_bvh(triangles, object_refs=None) -> Bvh:
    """Median-split BVH over the longest centroid axis, at most 4 triangles per leaf.

    The layout depends only on the input order, so identical inputs give
    identical trees.
    """
    tris = as_triangles(triangles)
    n = len(tris)
    refs = (np.zeros(n, dtype=np.int64) if object_refs is None
            else np.ascontiguousarray(object_refs, dtype=np.int64))
    if len(refs) != n:
        raise ValueError("object_refs length does not match triangle count")
    bmin, bmax, left, right, count, order = _build(tris)
    v0, e1, e2 = _edges(tris[order]) if n else (np.zeros((0, 3)),) * 3
    return Bvh(bmin, bmax, left, right, count, order, v0, e1, e2, _normal_lengths(e1, e2),
               np.ascontiguousarray(refs[order]))


def trace(bvh: Bvh, origins, directions, t_max: float):
    """Nearest hit for many rays. Returns ``(t, triangle_index)``; misses are (nan, -1)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(origins) == 1 and len(dirs) > 1:
        origins = np.ascontiguousarray(np.broadcast_to(origins, dirs.shape))
    out_t = np.empty(len(dirs))
    out_idx = np.empty(len(dirs), dtype=np.int64)
    _trace(origins, dirs, float(t_max), bvh.box_min, bvh.box_max, bvh.left,
           bvh.right, bvh.count, bvh.v0, bvh.e1, bvh.e2, bvh.nn, bvh.object_refs,
           bvh.order, out_t, out_idx)
    return out_t, out_idx


def nearest_hit(bvh: Bvh, origin, direction, t_max: float, object_refs=None) -> Optional[Hit]:
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    t, idx = trace(bvh, o[None], d[None], t_max)
    if idx[0] < 0:
        return None
    slot = np.flatnonzero(bvh.order == idx[0])[0]
    return Hit(float(t[0]), o + t[0] * d, int(bvh.object_refs[slot]), int(idx[0]))


def linear_scan(triangles, origins, directions, t_max: float, object_refs=None):
    """Reference nearest hit by testing every triangle; same contract as :func:`trace`."""
    tris = as_triangles(triangles)
    refs = (np.zeros(len(tris), dtype=np.int64) if object_refs is None
            else np.ascontiguousarray(object_refs, dtype=np.int64))
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    out_t = np.empty(len(dirs))
    out_idx = np.empty(len(dirs), dtype=np.int64)
    v0, e1, e2 = _edges(tris) if len(tris) else (np.zeros((0, 3)),) * 3
    _linear_scan(origins, dirs, v0, e1, e2, refs, float(t_max), out_t, out_idx)
    return out_t, out_idx
