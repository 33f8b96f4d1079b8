"""Spinning multi-channel LiDAR model.

Vertical angles are measured *downward* from the horizontal plane: the
default field of view, -3 to +25 degrees, spans 3 degrees above the horizon
to 25 degrees below it. Azimuth runs counter-clockwise from the sensor's
forward (x) axis toward its left (y) axis.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import geometry
from .scene import Scene, Snapshot, snapshot

DEFAULT_RAYS = 130_048  # 64 x 2032, smallest multiple of 64 >= 130000


@dataclass(frozen=True)
class LidarConfig:
    channels: int = 64
    vfov_min: float = -3.0
    vfov_max: float = 25.0
    rays_per_scan: int = DEFAULT_RAYS
    max_range: float = 80.0
    range_noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    attenuation: float = 0.004
    mount_height: float = 1.73
    rotation_rate: float = 10.0
    ego_points_ignore: bool = False  # label hood returns IGNORE instead of car

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.vfov_min > self.vfov_max or (self.vfov_min == self.vfov_max and self.channels != 1):
            raise ValueError("vfov_min must be below vfov_max")
        if self.rays_per_scan < self.channels:
            raise ValueError("rays_per_scan must be >= channels")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.range_noise_sigma < 0 or self.attenuation < 0 or self.rotation_rate <= 0:
            raise ValueError("noise, attenuation and rotation rate must be non-negative/positive")

    @property
    def steps(self) -> int:
        return -(-self.rays_per_scan // self.channels)

    @property
    def n_rays(self) -> int:
        return self.channels * self.steps

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, m) -> "LidarConfig":
        kw = {}
        for f in fields(cls):
            if f.name in m:
                v = m[f.name]
                if f.type == "int":
                    kw[f.name] = int(v)
                elif f.type == "bool":
                    kw[f.name] = v if isinstance(v, bool) else str(v).lower() in ("1", "yes", "true", "on")
                else:
                    kw[f.name] = float(v)
        unknown = set(m) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown lidar keys: {', '.join(sorted(unknown))}")
        return cls(**kw)


@dataclass
class Scan:
    points: np.ndarray  # (N, 4) float32: x, y, z in the sensor frame, intensity
    semantic: np.ndarray  # (N,) uint16 raw class ids
    instance: np.ndarray  # (N,) uint16
    ranges: np.ndarray  # (N,) float64 traced distance (after noise)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        return self.semantic, self.instance


def scan_pattern(config: LidarConfig) -> np.ndarray:
    """(channels * steps, 2) array of (vertical angle, azimuth) in degrees.

    Rays are ordered column by column: all channels of azimuth step 0, then
    step 1, and so on, matching the firing order of a spinning head.
    """
    if config.channels == 1:
        elev = np.array([(config.vfov_min + config.vfov_max) / 2])
    else:
        elev = np.linspace(config.vfov_min, config.vfov_max, config.channels)
    az = np.arange(config.steps) * (360.0 / config.steps)
    a, e = np.meshgrid(az, elev, indexing="ij")
    return np.stack([e.ravel(), a.ravel()], axis=1)


def ray_directions(config: LidarConfig) -> np.ndarray:
    """Unit ray directions in the sensor frame, in pattern order."""
    pat = np.radians(scan_pattern(config))
    e, a = pat[:, 0], pat[:, 1]
    ce = np.cos(e)
    return np.stack([ce * np.cos(a), ce * np.sin(a), -np.sin(e)], axis=1)


def intensity(distance, config: LidarConfig):
    return np.exp(-config.attenuation * np.asarray(distance, dtype=np.float64))


def sensor_pose(ego_pose: np.ndarray, config: LidarConfig) -> np.ndarray:
    """Sensor-to-world transform: the ego pose raised by the mount height."""
    mount = np.eye(4)
    mount[2, 3] = config.mount_height
    return np.asarray(ego_pose, dtype=np.float64) @ mount


_DIR_CACHE: dict[tuple, np.ndarray] = {}


def _directions_cached(config: LidarConfig) -> np.ndarray:
    key = (config.channels, config.vfov_min, config.vfov_max, config.rays_per_scan)
    d = _DIR_CACHE.get(key)
    if d is None:
        d = _DIR_CACHE[key] = ray_directions(config)
    return d


def simulate_scan(scene: Scene | Snapshot, bvh: geometry.Bvh, config: LidarConfig,
                  ego_pose: np.ndarray, rng_seed: int) -> Scan:
    """Trace one revolution with the pose frozen.

    ``scene`` supplies per-object ``semantic`` and ``instance`` arrays indexed
    by the BVH object refs. Noise and dropout draws are made for every ray
    in pattern order, so results depend only on the inputs and ``rng_seed``.
    """
    local = _directions_cached(config)
    sp = sensor_pose(ego_pose, config)
    rot = sp[:3, :3]
    world_dirs = local @ rot.T
    t, tri = geometry.trace(bvh, sp[:3, 3][None], world_dirs, config.max_range)
    hit = tri >= 0

    rng = np.random.default_rng(rng_seed)
    n = len(local)
    if config.range_noise_sigma > 0:
        sig = config.range_noise_sigma
        noise = np.clip(rng.standard_normal(n) * sig, -3 * sig, 3 * sig)
    else:
        noise = np.zeros(n)
    if config.dropout_prob > 0:
        hit &= rng.random(n) >= config.dropout_prob

    idx = np.flatnonzero(hit)
    rng_t = t[idx] + noise[idx]
    keep = rng_t > 0
    idx, rng_t = idx[keep], rng_t[keep]

    obj = _object_refs(bvh)[tri[idx]]
    sem = np.asarray(scene.semantic)[obj]
    inst = np.asarray(scene.instance)[obj]

    xyz = local[idx] * rng_t[:, None]
    pts = np.empty((len(idx), 4), dtype=np.float32)
    pts[:, :3] = xyz
    pts[:, 3] = intensity(rng_t, config)
    return Scan(pts, sem.astype(np.uint16), inst.astype(np.uint16), rng_t)


def _object_refs(bvh: geometry.Bvh) -> np.ndarray:
    """Object ref per original triangle index."""
    refs = np.empty(bvh.n_triangles, dtype=np.int64)
    refs[bvh.order] = bvh.object_refs
    return refs


def scan_at(scene: Scene, config: LidarConfig, ego_pose: np.ndarray, t: float = 0.0,
            rng_seed: int = 0) -> Scan:
    """Snapshot the scene at time ``t`` with the ego hood in place, build a BVH and trace."""
    label = 0 if config.ego_points_ignore else None
    snap = snapshot(scene, t, ego_pose, ego_label=label)
    bvh = geometry.build_bvh(snap.triangles, snap.object_refs)
    return simulate_scan(snap, bvh, config, ego_pose, rng_seed)
