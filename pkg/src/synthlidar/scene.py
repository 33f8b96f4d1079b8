"""Procedural labelled urban scenes and ego trajectories.

A map template describes a Manhattan grid: ``blocks_x * blocks_y`` blocks
separated by two-way streets, with sidewalks, buildings or parks inside the
blocks, street furniture along the curbs and a vegetated terrain margin
around the grid. The ego vehicle drives a counter-clockwise loop along the
streets one block in from the border, so the grid needs at least 3 blocks
per axis.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import meshes
from .taxonomy import Taxonomy

MIN_SPACING = 1.5
SIDEWALK_HEIGHT = 0.15


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class MapTemplate:
    name: str = "demo"
    blocks_x: int = 3
    blocks_y: int = 3
    block_size: float = 60.0  # between curbs, sidewalks included
    lanes_per_direction: int = 1
    lane_width: float = 3.5
    sidewalk_width: float = 3.0
    margin: float = 100.0
    building_prob: float = 0.85  # per block; other blocks are parks
    lot_width: tuple[float, float] = (12.0, 28.0)
    lot_gap_prob: float = 0.15
    building_height: tuple[float, float] = (8.0, 24.0)
    building_depth: tuple[float, float] = (10.0, 20.0)
    setback: tuple[float, float] = (0.0, 2.5)
    tree_spacing: float = 14.0  # along sidewalks; 0 disables
    park_tree_density: float = 0.004  # trees per m^2
    margin_tree_density: float = 0.0008
    pole_spacing: float = 25.0
    sign_prob: float = 0.4
    fence_prob: float = 0.5
    hedge_prob: float = 0.3
    guardrails: bool = True

    def __post_init__(self):
        if self.blocks_x < 3 or self.blocks_y < 3:
            raise SceneError(f"template {self.name!r}: need at least 3x3 blocks for a lane loop")
        if self.block_size <= 2 * self.sidewalk_width + 10:
            raise SceneError(f"template {self.name!r}: block_size too small")

    @property
    def half_road(self) -> float:
        return self.lanes_per_direction * self.lane_width

    @property
    def pitch(self) -> float:
        return self.block_size + 2 * self.half_road

    @property
    def extent(self) -> tuple[float, float]:
        return self.blocks_x * self.pitch, self.blocks_y * self.pitch


_TUPLE_FIELDS = {f.name for f in dataclasses.fields(MapTemplate) if f.type.startswith("tuple")}


def parse_template(text: str) -> MapTemplate:
    """Read a ``[template]`` section of ``key = value`` lines; missing keys keep defaults."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    if "template" not in cp:
        raise SceneError("template file has no [template] section")
    kw = {}
    types = {f.name: f.type for f in dataclasses.fields(MapTemplate)}
    for key, raw in cp["template"].items():
        if key not in types:
            raise SceneError(f"unknown template key {key!r}")
        t = types[key]
        try:
            if key in _TUPLE_FIELDS:
                a, b = (float(v) for v in raw.replace(",", " ").split())
                kw[key] = (a, b)
            elif t == "int":
                kw[key] = int(raw)
            elif t == "float":
                kw[key] = float(raw)
            elif t == "bool":
                kw[key] = cp["template"].getboolean(key)
            else:
                kw[key] = raw.strip()
        except ValueError:
            raise SceneError(f"template key {key!r}: bad value {raw!r}") from None
    return MapTemplate(**kw)


def template_names() -> list[str]:
    root = resources.files("synthlidar").joinpath("data/templates")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def get_template(name_or_path: str) -> MapTemplate:
    """Shipped preset by name, or a template file path."""
    p = Path(name_or_path)
    if p.suffix == ".cfg" and p.exists():
        return parse_template(p.read_text(encoding="utf-8"))
    res = resources.files("synthlidar").joinpath(f"data/templates/{name_or_path}.cfg")
    if not res.is_file():
        raise SceneError(f"unknown map template {name_or_path!r} (known: {', '.join(template_names())})")
    return parse_template(res.read_text(encoding="utf-8"))


# ---------------------------------------------------------------- scene types

def pose2d(x: float, y: float, yaw: float, z: float = 0.0) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    m = np.eye(4)
    m[:2, :2] = [[c, -s], [s, c]]
    m[:3, 3] = (x, y, z)
    return m


@dataclass(frozen=True)
class Support:
    """Straight path an actor stands on: ``start + s * direction`` for s in [0, length]."""

    start: tuple[float, float]
    direction: tuple[float, float]  # unit
    length: float
    z: float
    kind: str  # "lane" | "sidewalk"
    half_width: float

    def point(self, s: float) -> np.ndarray:
        return np.array(self.start) + s * np.array(self.direction)


@dataclass
class SceneObject:
    mesh: np.ndarray  # (N, 3, 3) in object frame
    raw_class: int
    instance_id: int
    transform: np.ndarray  # 4x4, object -> world at step 0
    support: Optional[Support] = None
    s0: float = 0.0
    speed: float = 0.0  # m/s along the support; negative drives backwards along it

    def transform_at(self, t: float) -> np.ndarray:
        if self.speed == 0.0 or self.support is None:
            return self.transform
        sup = self.support
        s = (self.s0 + self.speed * t) % sup.length
        x, y = sup.point(s)
        yaw = math.atan2(sup.direction[1], sup.direction[0]) + (math.pi if self.speed < 0 else 0.0)
        return pose2d(x, y, yaw, sup.z)

    def world_mesh(self, t: float = 0.0) -> np.ndarray:
        return meshes.transform(self.mesh, self.transform_at(t))


@dataclass
class Scene:
    """Immutable once built. Object index is the ``object_ref`` used by the BVH."""

    objects: tuple[SceneObject, ...]
    taxonomy: Taxonomy
    template: MapTemplate
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]]
    route: np.ndarray  # (V, 2) closed counter-clockwise loop
    lanes: tuple[tuple[float, float, float, float], ...]  # lane rectangles x0, y0, x1, y1
    seed: int = 0
    _static: tuple[np.ndarray, np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        tris, refs = [], []
        for i, ob in enumerate(self.objects):
            if ob.speed == 0.0:
                w = ob.world_mesh(0.0)
                tris.append(w)
                refs.append(np.full(len(w), i, dtype=np.int64))
        self._static = (np.concatenate(tris) if tris else np.zeros((0, 3, 3)),
                        np.concatenate(refs) if refs else np.zeros(0, dtype=np.int64))

    @property
    def semantic(self) -> np.ndarray:
        return np.array([o.raw_class for o in self.objects], dtype=np.int64)

    @property
    def instance(self) -> np.ndarray:
        return np.array([o.instance_id for o in self.objects], dtype=np.int64)

    def triangles(self, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """World triangles and their object refs with moving actors posed at time ``t``."""
        tris, refs = [self._static[0]], [self._static[1]]
        for i, ob in enumerate(self.objects):
            if ob.speed != 0.0:
                w = ob.world_mesh(t)
                tris.append(w)
                refs.append(np.full(len(w), i, dtype=np.int64))
        return np.concatenate(tris), np.concatenate(refs)

    def actors(self, raw_class: int | None = None) -> list[SceneObject]:
        return [o for o in self.objects if o.instance_id > 0
                and (raw_class is None or o.raw_class == raw_class)]


@dataclass
class Snapshot:
    """Triangle soup of one instant, including the ego mesh as the last object."""

    triangles: np.ndarray
    object_refs: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray


def snapshot(scene: Scene, t: float = 0.0, ego_pose: np.ndarray | None = None,
             ego_label: int | None = None) -> Snapshot:
    tris, refs = scene.triangles(t)
    sem, inst = scene.semantic, scene.instance
    if ego_pose is not None:
        label = scene.taxonomy.raw_id("car") if ego_label is None else ego_label
        hood = meshes.transform(meshes.ego_hood(), ego_pose)
        tris = np.concatenate([tris, hood])
        refs = np.concatenate([refs, np.full(len(hood), len(sem), dtype=np.int64)])
        sem = np.append(sem, label)
        inst = np.append(inst, 0)
    return Snapshot(tris, refs, sem, inst)


# ---------------------------------------------------------------- static world

class _Builder:
    def __init__(self, taxonomy: Taxonomy):
        self.tax = taxonomy
        self.objects: list[SceneObject] = []

    def add(self, cls_name: str, mesh: np.ndarray) -> None:
        try:
            rid = self.tax.raw_id(cls_name)
        except KeyError:
            raise SceneError(f"template needs class {cls_name!r}, missing from taxonomy") from None
        self.objects.append(SceneObject(mesh, rid, 0, np.eye(4)))


def _street_lines(tpl: MapTemplate) -> tuple[np.ndarray, np.ndarray]:
    return (np.arange(tpl.blocks_x + 1) * tpl.pitch, np.arange(tpl.blocks_y + 1) * tpl.pitch)


def _route(tpl: MapTemplate) -> np.ndarray:
    xs, ys = _street_lines(tpl)
    o = 0.5 * tpl.lane_width
    x0, x1 = xs[1] - o, xs[-2] + o
    y0, y1 = ys[1] - o, ys[-2] + o
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _lane_rects(tpl: MapTemplate) -> list[tuple[float, float, float, float]]:
    xs, ys = _street_lines(tpl)
    hw = tpl.half_road
    lo_x, hi_x = xs[0] - hw, xs[-1] + hw
    lo_y, hi_y = ys[0] - hw, ys[-1] + hw
    rects = []
    for y in ys:
        for k in range(-tpl.lanes_per_direction, tpl.lanes_per_direction):
            rects.append((lo_x, y + k * tpl.lane_width, hi_x, y + (k + 1) * tpl.lane_width))
    for x in xs:
        for k in range(-tpl.lanes_per_direction, tpl.lanes_per_direction):
            rects.append((x + k * tpl.lane_width, lo_y, x + (k + 1) * tpl.lane_width, hi_y))
    return rects


def _build_static(tpl: MapTemplate, b: _Builder, rng: np.random.Generator) -> None:
    xs, ys = _street_lines(tpl)
    hw, sw = tpl.half_road, tpl.sidewalk_width
    ext_x, ext_y = xs[-1], ys[-1]
    m = tpl.margin

    # ground: terrain slightly below the roads so they never tie
    b.add("terrain", meshes.tiled_rect(-hw - m, -hw - m, ext_x + hw + m, ext_y + hw + m, -0.02))
    for y in ys:
        b.add("road", meshes.tiled_rect(-hw, y - hw, ext_x + hw, y + hw, 0.0))
        b.add("lane-marking", meshes.rect(-hw, y - 0.08, ext_x + hw, y + 0.08, 0.005))
    for x in xs:
        for j in range(len(ys) - 1):
            b.add("road", meshes.tiled_rect(x - hw, ys[j] + hw, x + hw, ys[j + 1] - hw, 0.0))
            b.add("lane-marking", meshes.rect(x - 0.08, ys[j] + hw, x + 0.08, ys[j + 1] - hw, 0.005))
    if tpl.guardrails:
        for y in (ys[0] - hw - 0.6, ys[-1] + hw + 0.6):
            b.add("guardrail", meshes.strip((-hw, y), (ext_x + hw, y), 0.1, 0.3, 0.8))
        for x in (xs[0] - hw - 0.6, xs[-1] + hw + 0.6):
            b.add("guardrail", meshes.strip((x, -hw), (x, ext_y + hw), 0.1, 0.3, 0.8))

    for i in range(tpl.blocks_x):
        for j in range(tpl.blocks_y):
            xa, xb = xs[i] + hw, xs[i + 1] - hw
            ya, yb = ys[j] + hw, ys[j + 1] - hw
            _block(tpl, b, rng, xa, ya, xb, yb)

    # vegetated margin outside the grid
    area = (ext_x + 2 * hw + 2 * m) * (ext_y + 2 * hw + 2 * m) - (ext_x + 2 * hw + 8) * (ext_y + 2 * hw + 8)
    n_trees = int(rng.poisson(max(area, 0) * tpl.margin_tree_density))
    placed = 0
    while placed < n_trees:
        x = rng.uniform(-hw - m, ext_x + hw + m)
        y = rng.uniform(-hw - m, ext_y + hw + m)
        if -hw - 4 < x < ext_x + hw + 4 and -hw - 4 < y < ext_y + hw + 4:
            continue
        _tree(b, rng, x, y, 0.0)
        placed += 1


def _tree(b: _Builder, rng, x, y, z) -> None:
    h = rng.uniform(2.0, 3.5)
    r = rng.uniform(1.5, 3.0)
    b.add("vegetation", np.concatenate([
        meshes.cylinder(rng.uniform(0.15, 0.3), z, z + h, 6, (x, y)),
        meshes.blob((r, r, r * rng.uniform(0.8, 1.3)), (x, y, z + h + r * 0.8))]))


def _block(tpl: MapTemplate, b: _Builder, rng, xa, ya, xb, yb) -> None:
    sw = tpl.sidewalk_width
    z = SIDEWALK_HEIGHT
    b.add("sidewalk", np.concatenate([
        meshes.aabox((xa, ya, 0), (xb, ya + sw, z)),
        meshes.aabox((xa, yb - sw, 0), (xb, yb, z)),
        meshes.aabox((xa, ya + sw, 0), (xa + sw, yb - sw, z)),
        meshes.aabox((xb - sw, ya + sw, 0), (xb, yb - sw, z))]))

    # street furniture along each curb: (start, end, inward normal)
    sides = [((xa, ya), (xb, ya), (0, 1)), ((xb, ya), (xb, yb), (-1, 0)),
             ((xb, yb), (xa, yb), (0, -1)), ((xa, yb), (xa, ya), (1, 0))]
    for p0, p1, nrm in sides:
        p0, p1, nrm = np.array(p0, float), np.array(p1, float), np.array(nrm, float)
        d = p1 - p0
        length = np.linalg.norm(d)
        u = d / length
        if tpl.pole_spacing > 0:
            s = rng.uniform(sw + 2, sw + 2 + tpl.pole_spacing)
            while s < length - sw - 2:
                pos = p0 + u * s + nrm * 0.5
                b.add("pole", meshes.cylinder(0.1, z, z + rng.uniform(4.5, 7.5), 8, tuple(pos)))
                if rng.random() < tpl.sign_prob:
                    plate = meshes.strip(pos - u * 0.35, pos + u * 0.35, 0.05, z + 2.2, z + 2.9)
                    b.add("traffic-sign", meshes.transform(plate, _shift(nrm * 0.12)))
                s += tpl.pole_spacing * rng.uniform(0.8, 1.2)
        if tpl.tree_spacing > 0:
            s = rng.uniform(sw + 4, sw + 4 + tpl.tree_spacing)
            while s < length - sw - 4:
                pos = p0 + u * s + nrm * (sw * 0.6)
                _tree(b, rng, pos[0], pos[1], z)
                s += tpl.tree_spacing * rng.uniform(0.7, 1.3)

    ia, ib = xa + sw, xb - sw
    ja, jb = ya + sw, yb - sw
    if rng.random() < tpl.building_prob:
        _built_block(tpl, b, rng, ia, ja, ib, jb)
    else:
        _park(tpl, b, rng, ia, ja, ib, jb)


def _shift(v2) -> np.ndarray:
    m = np.eye(4)
    m[:2, 3] = v2
    return m


def _built_block(tpl, b: _Builder, rng, ia, ja, ib, jb) -> None:
    inner = min(ib - ia, jb - ja)
    sides = [((ia, ja), (1, 0), (0, 1), ib - ia), ((ib, ja), (0, 1), (-1, 0), jb - ja),
             ((ib, jb), (-1, 0), (0, -1), ib - ia), ((ia, jb), (0, -1), (1, 0), jb - ja)]
    for origin, u, nrm, length in sides:
        origin, u, nrm = np.array(origin, float), np.array(u, float), np.array(nrm, float)
        s = 0.0
        while s < length - 4:
            w = min(rng.uniform(*tpl.lot_width), length - s)
            a, c = origin + u * s, origin + u * (s + w)
            if rng.random() < tpl.lot_gap_prob:
                if rng.random() < tpl.fence_prob:
                    f0, f1 = a + nrm * 0.3, c + nrm * 0.3
                    b.add("fence", meshes.strip(f0, f1, 0.05, 0.0, rng.uniform(1.2, 2.0)))
                if rng.random() < tpl.hedge_prob:
                    h0, h1 = a + nrm * 1.2, c + nrm * 1.2
                    b.add("vegetation", meshes.strip(h0, h1, 0.8, 0.0, rng.uniform(0.8, 1.5)))
            else:
                sb = rng.uniform(*tpl.setback)
                depth = min(rng.uniform(*tpl.building_depth), inner / 2 - 0.5)
                p = [a + nrm * sb, c + nrm * sb, c + nrm * (sb + depth), a + nrm * (sb + depth)]
                lo = np.min(p, axis=0)
                hi = np.max(p, axis=0)
                b.add("building", meshes.aabox((lo[0], lo[1], 0.0), (hi[0], hi[1], rng.uniform(*tpl.building_height))))
                if sb > 1.0 and rng.random() < tpl.fence_prob * 0.5:
                    b.add("fence", meshes.strip(a + nrm * 0.3, c + nrm * 0.3, 0.05, 0.0, 1.0))
            s += w


def _park(tpl, b: _Builder, rng, ia, ja, ib, jb) -> None:
    if rng.random() < tpl.fence_prob:
        corners = [(ia + 0.3, ja + 0.3), (ib - 0.3, ja + 0.3), (ib - 0.3, jb - 0.3), (ia + 0.3, jb - 0.3)]
        for k in range(4):
            b.add("fence", meshes.strip(corners[k], corners[(k + 1) % 4], 0.05, 0.0, 1.2))
    n = int(rng.poisson((ib - ia) * (jb - ja) * tpl.park_tree_density))
    for _ in range(n):
        _tree(b, rng, rng.uniform(ia + 3, ib - 3), rng.uniform(ja + 3, jb - 3), 0.0)
    for _ in range(int(rng.integers(2, 6))):
        cx, cy = rng.uniform(ia + 3, ib - 3), rng.uniform(ja + 3, jb - 3)
        r = rng.uniform(0.6, 1.5)
        b.add("vegetation", meshes.blob((r * 1.5, r, r * 0.7), (cx, cy, r * 0.5)))


# ---------------------------------------------------------------- actors

@dataclass(frozen=True)
class ActorSpec:
    mesh: callable
    support: str  # "lane" | "sidewalk"
    length: float
    width: float
    speed: float  # used when the class name starts with "moving-"


ACTOR_SPECS: dict[str, ActorSpec] = {
    "car": ActorSpec(meshes.car, "lane", 4.4, 1.8, 8.0),
    "truck": ActorSpec(meshes.truck, "lane", 8.6, 2.5, 7.0),
    "bicycle": ActorSpec(meshes.bicycle, "sidewalk", 1.8, 0.6, 4.0),
    "motorcycle": ActorSpec(meshes.motorcycle, "lane", 2.2, 0.8, 8.0),
    "person": ActorSpec(meshes.person, "sidewalk", 0.6, 0.6, 1.4),
    "bicyclist": ActorSpec(meshes.bicyclist, "lane", 1.8, 0.6, 4.5),
    "motorcyclist": ActorSpec(meshes.motorcyclist, "lane", 2.2, 0.8, 8.0),
}
_GENERIC = ActorSpec(lambda: meshes.box(1.0, 1.0, 1.2), "sidewalk", 1.0, 1.0, 1.0)


def actor_spec(name: str) -> ActorSpec:
    base = name[len("moving-"):] if name.startswith("moving-") else name
    spec = ACTOR_SPECS.get(base, _GENERIC)
    if base == "bicycle" and name.startswith("moving-"):
        return dataclasses.replace(spec, support="lane")
    return spec


def _supports(tpl: MapTemplate, route: np.ndarray) -> list[Support]:
    """Lane centre segments between intersections plus sidewalk centre lines.

    Lane segments lying on the ego loop in the ego's own direction are left
    out so no actor ever blocks the ego path.
    """
    xs, ys = _street_lines(tpl)
    hw, lw, sw = tpl.half_road, tpl.lane_width, tpl.sidewalk_width
    gap = 1.0
    out: list[Support] = []
    for j, y in enumerate(ys):
        for i in range(len(xs) - 1):
            x0, x1 = xs[i] + hw + gap, xs[i + 1] - hw - gap
            for k in range(tpl.lanes_per_direction):
                off = (k + 0.5) * lw
                out.append(Support((x0, y - off), (1.0, 0.0), x1 - x0, 0.0, "lane", lw / 2))
                out.append(Support((x1, y + off), (-1.0, 0.0), x1 - x0, 0.0, "lane", lw / 2))
    for i, x in enumerate(xs):
        for j in range(len(ys) - 1):
            y0, y1 = ys[j] + hw + gap, ys[j + 1] - hw - gap
            for k in range(tpl.lanes_per_direction):
                off = (k + 0.5) * lw
                out.append(Support((x + off, y0), (0.0, 1.0), y1 - y0, 0.0, "lane", lw / 2))
                out.append(Support((x - off, y1), (0.0, -1.0), y1 - y0, 0.0, "lane", lw / 2))
    out = [s for s in out if not _on_route(s, route)]
    for i in range(tpl.blocks_x):
        for j in range(tpl.blocks_y):
            xa, xb = xs[i] + hw, xs[i + 1] - hw
            ya, yb = ys[j] + hw, ys[j + 1] - hw
            c = sw / 2
            z = SIDEWALK_HEIGHT
            L = xb - xa - sw - 2
            out.append(Support((xa + sw / 2 + 1, ya + c), (1.0, 0.0), L, z, "sidewalk", sw / 2))
            out.append(Support((xb - sw / 2 - 1, yb - c), (-1.0, 0.0), L, z, "sidewalk", sw / 2))
            L = yb - ya - sw - 2
            out.append(Support((xb - c, ya + sw / 2 + 1), (0.0, 1.0), L, z, "sidewalk", sw / 2))
            out.append(Support((xa + c, yb - sw / 2 - 1), (0.0, -1.0), L, z, "sidewalk", sw / 2))
    return out


def _on_route(sup: Support, route: np.ndarray) -> bool:
    mid = sup.point(sup.length / 2)
    n = len(route)
    for k in range(n):
        a, b = route[k], route[(k + 1) % n]
        d = b - a
        seg_u = d / np.linalg.norm(d)
        if np.dot(seg_u, sup.direction) < 0.99:
            continue
        t = np.clip(np.dot(mid - a, d) / np.dot(d, d), 0, 1)
        if np.linalg.norm(a + t * d - mid) < 0.1:
            return True
    return False


def capacity(tpl: MapTemplate, raw_name: str, supports: Sequence[Support] | None = None) -> int:
    """Upper bound on how many actors of a class fit on their supports."""
    spec = actor_spec(raw_name)
    sups = supports if supports is not None else _supports(tpl, _route(tpl))
    total = sum(s.length for s in sups if s.kind == spec.support)
    return int(total // (spec.length + MIN_SPACING))


def _footprint(center, direction, length, width, pad):
    hx = (abs(direction[0]) * length + abs(direction[1]) * width) / 2 + pad
    hy = (abs(direction[1]) * length + abs(direction[0]) * width) / 2 + pad
    return center[0] - hx, center[1] - hy, center[0] + hx, center[1] + hy


def _overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


_GOLDEN = (5 ** 0.5 - 1) / 2


def _route_distance(p, route: np.ndarray) -> float:
    best = np.inf
    for k in range(len(route)):
        a, b = route[k], route[(k + 1) % len(route)]
        d = b - a
        t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(a + t * d - p)))
    return best


def _place_actors(tpl: MapTemplate, plan: Mapping[int, int], taxonomy: Taxonomy,
                  seed_key: Sequence[int], route: np.ndarray) -> list[SceneObject]:
    supports = _supports(tpl, route)
    by_kind = {k: [s for s in supports if s.kind == k] for k in ("lane", "sidewalk")}
    # keep clear of every possible ego spawn point (loop edge midpoints)
    placed: list[tuple[float, float, float, float]] = []
    for k in range(len(route)):
        mid = (route[k] + route[(k + 1) % len(route)]) / 2
        placed.append(_footprint(mid, (1.0, 0.0), 6.0, 6.0, 1.0))
    out: list[SceneObject] = []
    instance = 0
    for rid in sorted(plan):
        n = int(plan[rid])
        if n == 0:
            continue
        cls = taxonomy.by_id(rid)
        if not cls.is_actor:
            raise SceneError(f"class {cls.name!r} is not a dynamic actor and cannot be spawned")
        spec = actor_spec(cls.name)
        cap = capacity(tpl, cls.name, supports)
        if n > cap:
            raise SceneError(f"capacity exceeded for class {cls.name!r}: {n} requested, {cap} fit")
        # ordered by distance from the ego loop, so the sequence below also
        # stratifies by distance, the main driver of how many points an actor gets
        sups = sorted((u for u in by_kind[spec.support] if u.length > spec.length),
                      key=lambda u: _route_distance(u.point(u.length / 2), route))
        ends = np.cumsum([u.length - spec.length for u in sups])
        # per-class stream: positions of one class do not depend on the others
        u0 = np.random.default_rng([*seed_key, rid]).random()
        moving = cls.name.startswith("moving-")
        for i in range(n):
            # golden-ratio sequence over the concatenated supports: every
            # prefix of n actors is spread evenly along the support length.
            # A blocked slot is retried nearby with growing jitter, so one
            # collision does not shift the rest of the class.
            arng = np.random.default_rng([*seed_key, rid, i])
            home = (u0 + i * _GOLDEN) % 1.0 * ends[-1]
            for attempt in range(2000):
                jitter = 0.0 if attempt == 0 else arng.uniform(-1, 1) * attempt * 0.25 * (spec.length + MIN_SPACING)
                u = (home + jitter) % ends[-1]
                k = int(np.searchsorted(ends, u, side="right"))
                sup = sups[k]
                s = spec.length / 2 + u - (ends[k - 1] if k else 0.0)
                lateral = arng.uniform(-1, 1) * max(sup.half_width - spec.width / 2 - 0.2, 0.0)
                c = sup.point(s) + lateral * np.array([-sup.direction[1], sup.direction[0]])
                fp = _footprint(c, sup.direction, spec.length, spec.width, MIN_SPACING / 2)
                if any(_overlap(fp, q) for q in placed):
                    continue
                placed.append(fp)
                break
            else:
                raise SceneError(f"could not place {n} actors of class {cls.name!r} with "
                                 f"{MIN_SPACING} m spacing; lower the count")
            instance += 1
            yaw = math.atan2(sup.direction[1], sup.direction[0])
            tf = pose2d(c[0], c[1], yaw, sup.z)
            if moving:
                shifted = Support(tuple(np.array(sup.start) + c - sup.point(s)), sup.direction,
                                  sup.length, sup.z, sup.kind, sup.half_width)
                out.append(SceneObject(spec.mesh(), rid, instance, tf, shifted, s, spec.speed))
            else:
                out.append(SceneObject(spec.mesh(), rid, instance, tf))
    if instance > 0xFFFF:
        raise SceneError("more than 65535 actors do not fit 16-bit instance ids")
    return out


def generate_scene(template: MapTemplate, plan: Mapping[int, int], taxonomy: Taxonomy,
                   seed: int, actor_seed: int | None = None) -> Scene:
    """Static world from the template, then exactly ``plan[c]`` actors of each class.

    Static content and actor placement draw from independent random
    streams, so the static world is identical for every plan. ``actor_seed``
    redraws actor placement alone (used for calibration replicates).
    """
    for cls in ("terrain", "road", "lane-marking", "sidewalk", "building", "fence",
                "vegetation", "pole", "traffic-sign") + (("guardrail",) if template.guardrails else ()):
        if not any(c.name == cls for c in taxonomy.classes):
            raise SceneError(f"template {template.name!r} needs class {cls!r}, missing from taxonomy")
    b = _Builder(taxonomy)
    _build_static(template, b, np.random.default_rng([seed, 0]))
    route = _route(template)
    actors = _place_actors(template, plan, taxonomy, [seed, 1] if actor_seed is None else [seed, 1, actor_seed], route)
    objects = tuple(b.objects + actors)
    hw, m = template.half_road, template.margin
    ex, ey = template.extent
    bounds = ((-hw - m, -hw - m, -0.02), (ex + hw + m, ey + hw + m, 40.0))
    return Scene(objects, taxonomy, template, bounds, route, tuple(_lane_rects(template)), seed)


# ---------------------------------------------------------------- trajectory

def _route_point(route: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and unit tangent at arc length ``s`` (wrapping) along the closed route."""
    n = len(route)
    seg = [route[(k + 1) % n] - route[k] for k in range(n)]
    lens = [float(np.linalg.norm(d)) for d in seg]
    s = s % sum(lens)
    for k in range(n):
        if s < lens[k] or k == n - 1:
            u = seg[k] / lens[k]
            return route[k] + u * min(s, lens[k]), u
        s -= lens[k]
    raise AssertionError("unreachable")


def route_length(route: np.ndarray) -> float:
    return float(sum(np.linalg.norm(route[(k + 1) % len(route)] - route[k]) for k in range(len(route))))


def ego_trajectory(scene: Scene, n_scans: int, speed: float = 10.0, rate: float = 10.0,
                   seed: int = 0) -> list[np.ndarray]:
    """Poses spaced ``speed / rate`` metres apart along the ego loop.

    The route starts at the midpoint of one loop edge chosen by ``seed``
    (edge ``seed mod 4``), heading along the loop.
    """
    if n_scans < 1:
        raise ValueError("n_scans must be >= 1")
    route = scene.route
    if route is None or len(route) < 3:
        raise SceneError("scene has no drivable loop")
    lens = [float(np.linalg.norm(route[(k + 1) % len(route)] - route[k])) for k in range(len(route))]
    edge = seed % len(route)
    start = sum(lens[:edge]) + lens[edge] / 2
    step = speed / rate
    poses = []
    for i in range(n_scans):
        p, u = _route_point(route, start + i * step)
        poses.append(pose2d(p[0], p[1], math.atan2(u[1], u[0])))
    return poses
