"""Primitive triangle meshes: boxes, prisms, cylinders, low-poly spheres.

Every builder returns an ``(N, 3, 3)`` float64 array.
"""

from __future__ import annotations

import numpy as np


def quad(p0, p1, p2, p3) -> np.ndarray:
    """Two triangles for the planar quad p0-p1-p2-p3 (in order around the edge)."""
    p0, p1, p2, p3 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2, p3))
    return np.array([[p0, p1, p2], [p0, p2, p3]])


def rect(x0, y0, x1, y1, z=0.0) -> np.ndarray:
    """Horizontal rectangle."""
    return quad((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z))


def tiled_rect(x0, y0, x1, y1, z=0.0, tile=16.0) -> np.ndarray:
    """Horizontal rectangle split into tiles so large ground areas stay BVH-friendly."""
    nx = max(1, int(np.ceil((x1 - x0) / tile)))
    ny = max(1, int(np.ceil((y1 - y0) / tile)))
    gx = np.linspace(x0, x1, nx + 1)
    gy = np.linspace(y0, y1, ny + 1)
    return np.concatenate([rect(gx[i], gy[j], gx[i + 1], gy[j + 1], z)
                           for i in range(nx) for j in range(ny)])


def aabox(lo, hi) -> np.ndarray:
    """Axis-aligned box between corners ``lo`` and ``hi`` (12 triangles)."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    c = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]], dtype=np.float64)
    faces = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
    return np.concatenate([quad(*c[list(f)]) for f in faces])


def box(sx, sy, sz, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Box of size (sx, sy, sz) whose *bottom* centre sits at ``center``."""
    cx, cy, cz = center
    return aabox((cx - sx / 2, cy - sy / 2, cz), (cx + sx / 2, cy + sy / 2, cz + sz))


def prism(polygon, z0, z1, caps=True) -> np.ndarray:
    """Vertical extrusion of a convex polygon given counter-clockwise in xy."""
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    tris = []
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        tris.append(quad((*a, z0), (*b, z0), (*b, z1), (*a, z1)))
    if caps:
        for z in (z0, z1):
            for i in range(1, n - 1):
                tris.append(np.array([[(*poly[0], z), (*poly[i], z), (*poly[i + 1], z)]]))
    return np.concatenate(tris)


def cylinder(radius, z0, z1, segments=8, center=(0.0, 0.0), caps=True) -> np.ndarray:
    ang = np.arange(segments) * (2 * np.pi / segments)
    poly = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    return prism(poly, z0, z1, caps=caps)


_ICO_V = None
_ICO_F = None


def _icosahedron():
    global _ICO_V, _ICO_F
    if _ICO_V is None:
        g = (1 + 5 ** 0.5) / 2
        v = np.array([[-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
                      [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
                      [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1]], dtype=np.float64)
        _ICO_V = v / np.linalg.norm(v, axis=1, keepdims=True)
        _ICO_F = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                           [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                           [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                           [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return _ICO_V, _ICO_F


def blob(radii, center) -> np.ndarray:
    """Icosahedral ellipsoid (20 triangles), used for tree crowns and bushes."""
    v, f = _icosahedron()
    pts = v * np.asarray(radii, dtype=np.float64) + np.asarray(center, dtype=np.float64)
    return pts[f]


def strip(p0, p1, width, z0, z1) -> np.ndarray:
    """Thin wall between xy points ``p0`` and ``p1`` (fences, guardrails)."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    d = p1 - p0
    n = np.array([-d[1], d[0]]) / np.linalg.norm(d) * (width / 2)
    return prism([p0 - n, p1 - n, p1 + n, p0 + n], z0, z1)


def transform(tris: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply a 4x4 rigid transform to every vertex."""
    return tris @ m[:3, :3].T + m[:3, 3]


# ---------------------------------------------------------------- actors
# object frame: x forward, y left, z up, origin on the ground at the footprint centre

def car() -> np.ndarray:
    return np.concatenate([box(4.4, 1.8, 0.75, (0, 0, 0.3)),
                           box(2.3, 1.6, 0.5, (-0.3, 0, 1.05)),
                           *[box(0.6, 0.2, 0.3, (x, y, 0.0)) for x in (-1.4, 1.4) for y in (-0.8, 0.8)]])


def truck() -> np.ndarray:
    return np.concatenate([box(2.2, 2.4, 2.4, (3.2, 0, 0.5)),
                           box(6.2, 2.5, 3.0, (-1.1, 0, 0.6)),
                           *[box(1.0, 0.3, 0.6, (x, y, 0.0)) for x in (-3.0, 0.5, 3.2) for y in (-1.1, 1.1)]])


def bicycle() -> np.ndarray:
    return np.concatenate([box(0.7, 0.06, 0.7, (-0.55, 0, 0.0)),
                           box(0.7, 0.06, 0.7, (0.55, 0, 0.0)),
                           box(1.0, 0.06, 0.12, (0, 0, 0.6)),
                           box(0.08, 0.5, 0.08, (0.5, 0, 0.95))])


def motorcycle() -> np.ndarray:
    return np.concatenate([box(0.7, 0.15, 0.7, (-0.75, 0, 0.0)),
                           box(0.7, 0.15, 0.7, (0.75, 0, 0.0)),
                           box(1.4, 0.5, 0.5, (0, 0, 0.45)),
                           box(0.1, 0.7, 0.1, (0.6, 0, 1.05))])


def person(z0: float = 0.0) -> np.ndarray:
    return np.concatenate([cylinder(0.14, z0, z0 + 0.85, 6, (0, 0.1)),
                           cylinder(0.14, z0, z0 + 0.85, 6, (0, -0.1)),
                           cylinder(0.24, z0 + 0.85, z0 + 1.5, 8),
                           blob((0.12, 0.11, 0.14), (0, 0, z0 + 1.64))])


def rider(z0: float) -> np.ndarray:
    """Seated torso and head, without legs on the ground."""
    return np.concatenate([box(0.3, 0.4, 0.35, (-0.1, 0, z0)),
                           cylinder(0.22, z0 + 0.35, z0 + 0.95, 8, (-0.05, 0)),
                           blob((0.12, 0.11, 0.14), (0.0, 0, z0 + 1.1))])


def bicyclist() -> np.ndarray:
    return np.concatenate([bicycle(), rider(0.75)])


def motorcyclist() -> np.ndarray:
    return np.concatenate([motorcycle(), rider(0.9)])


def ego_hood() -> np.ndarray:
    """Visible part of the sensor-carrying car, in the ego frame.

    The roof sits inside the blind cone under the sensor head and is not
    modelled; only the hood in front can return points.
    """
    return aabox((1.5, -0.85, 0.3), (2.6, 0.85, 0.8))
