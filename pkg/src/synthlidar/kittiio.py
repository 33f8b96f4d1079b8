"""Readers and writers for the SemanticKITTI on-disk layout.

::

    root/sequences/SS/velodyne/NNNNNN.bin   N x (x, y, z, intensity) float32 LE
    root/sequences/SS/labels/NNNNNN.label   N x uint32 LE, semantic | instance << 16
    root/sequences/SS/poses.txt             12 floats per line, row-major 3x4
    root/sequences/SS/calib.txt, times.txt
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

POINT_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
LT_SCANS = 2000


class FormatError(ValueError):
    pass


def sequence_dir(root, seq: int | str) -> Path:
    return Path(root) / "sequences" / f"{int(seq):02d}"


def scan_name(index: int) -> str:
    return f"{index:06d}"


def write_scan(points, path) -> None:
    """Write an (N, 4) array of x, y, z, intensity as raw little-endian float32."""
    arr = np.asarray(points)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (N, 4) points, got {arr.shape}")
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype=POINT_DTYPE).tobytes())


def read_scan(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % 16:
        raise FormatError(f"{path}: length {len(data)} not divisible by 16")
    return np.frombuffer(data, dtype=POINT_DTYPE).reshape(-1, 4).astype(np.float32)


def compose_label(semantic, instance) -> np.ndarray:
    sem = np.asarray(semantic, dtype=np.uint32)
    inst = np.asarray(instance, dtype=np.uint32)
    if np.any(sem > 0xFFFF) or np.any(inst > 0xFFFF):
        raise ValueError("semantic and instance ids must fit in 16 bits")
    return (sem | (inst << np.uint32(16))).astype(np.uint32)


def split_label(words) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(words, dtype=np.uint32)
    return (w & np.uint32(0xFFFF)).astype(np.uint16), (w >> np.uint32(16)).astype(np.uint16)


def write_labels(labels, path) -> None:
    """Write label words; a ``(semantic, instance)`` pair of arrays is composed first."""
    if isinstance(labels, tuple):
        labels = compose_label(*labels)
    Path(path).write_bytes(np.ascontiguousarray(labels, dtype=LABEL_DTYPE).tobytes())


def read_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % 4:
        raise FormatError(f"{path}: length {len(data)} not divisible by 4")
    return np.frombuffer(data, dtype=LABEL_DTYPE).astype(np.uint32)


def _check_rigid(m: np.ndarray, i: int, tol: float = 1e-6) -> None:
    r = m[:3, :3]
    if not np.all(np.isfinite(m)):
        raise ValueError(f"pose {i}: non-finite entries")
    if not np.allclose(r @ r.T, np.eye(3), atol=tol) or np.linalg.det(r) < 0:
        raise ValueError(f"pose {i}: rotation block is not a proper rotation")
    if m.shape == (4, 4) and not np.allclose(m[3], [0, 0, 0, 1]):
        raise ValueError(f"pose {i}: bottom row is not [0 0 0 1]")


def format_pose(m) -> str:
    m = np.asarray(m, dtype=np.float64)
    # 17 significant digits round-trip float64 exactly
    return " ".join(f"{v:.17g}" for v in m[:3, :4].ravel())


def write_poses(poses: Iterable, path) -> None:
    lines = []
    for i, m in enumerate(poses):
        m = np.asarray(m, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"pose {i}: expected 3x4 or 4x4, got {m.shape}")
        _check_rigid(m, i)
        lines.append(format_pose(m) + "\n")
    Path(path).write_text("".join(lines), encoding="ascii")


def read_poses(path) -> np.ndarray:
    """Poses as (n, 4, 4) homogeneous matrices."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        if not line.strip():
            continue
        vals = line.split()
        if len(vals) != 12:
            raise FormatError(f"{path}:{lineno}: expected 12 values, got {len(vals)}")
        m = np.eye(4)
        m[:3, :4] = np.array([float(v) for v in vals]).reshape(3, 4)
        rows.append(m)
    return np.array(rows).reshape(-1, 4, 4)


def write_calib(path) -> None:
    """Identity calibration in the odometry calib.txt layout."""
    ident = "1 0 0 0 0 1 0 0 0 0 1 0"
    text = "".join(f"{k}: {ident}\n" for k in ("P0", "P1", "P2", "P3", "Tr"))
    Path(path).write_text(text, encoding="ascii")


def write_times(n: int, rate_hz: float, path) -> None:
    Path(path).write_text("".join(f"{i / rate_hz:.6e}\n" for i in range(n)), encoding="ascii")


def select_lt(sequence_lengths: Sequence[int], n: int = LT_SCANS) -> list[range]:
    """First ``n`` scan indices of every sequence."""
    return [range(0, min(n, max(0, int(length)))) for length in sequence_lengths]


@dataclass
class LayoutReport:
    root: Path
    sequences: dict[str, int] = field(default_factory=dict)
    points: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def n_scans(self) -> int:
        return sum(self.sequences.values())

    def raise_for_errors(self) -> None:
        if self.errors:
            raise FormatError("; ".join(self.errors))


def list_sequences(root) -> list[str]:
    base = Path(root) / "sequences"
    if not base.is_dir():
        return []
    return sorted(d.name for d in base.iterdir() if d.is_dir() and d.name.isdigit())


def _indices(folder: Path, suffix: str) -> list[int]:
    if not folder.is_dir():
        return []
    out = []
    for name in os.listdir(folder):
        stem, ext = os.path.splitext(name)
        if ext == suffix and stem.isdigit():
            out.append(int(stem))
    return sorted(out)


def validate_layout(root, sequences: Sequence[str | int] | None = None,
                    require_labels: bool = True) -> LayoutReport:
    """Check directory shape, index contiguity, point/label counts and poses length.

    Problems are collected into ``report.errors`` rather than raised.
    """
    root = Path(root)
    report = LayoutReport(root)
    seqs = [f"{int(s):02d}" for s in sequences] if sequences is not None else list_sequences(root)
    if not seqs:
        report.errors.append(f"{root}: no sequences found")
    for seq in seqs:
        sdir = sequence_dir(root, seq)
        if not sdir.is_dir():
            report.errors.append(f"sequence {seq}: missing directory {sdir}")
            continue
        bins = _indices(sdir / "velodyne", ".bin")
        labels = _indices(sdir / "labels", ".label")
        report.sequences[seq] = len(bins)
        if bins != list(range(len(bins))):
            missing = sorted(set(range(max(bins, default=-1) + 1)) - set(bins))
            report.errors.append(f"sequence {seq}: velodyne indices not contiguous from 000000"
                                 f" (missing {', '.join(scan_name(i) for i in missing[:5])})")
        if require_labels:
            for i in sorted(set(bins) - set(labels)):
                report.errors.append(f"sequence {seq} scan {scan_name(i)}: missing .label file")
            for i in sorted(set(labels) - set(bins)):
                report.errors.append(f"sequence {seq} scan {scan_name(i)}: .label without .bin")
        total = 0
        for i in bins:
            bpath = sdir / "velodyne" / f"{scan_name(i)}.bin"
            nbytes = bpath.stat().st_size
            if nbytes % 16:
                report.errors.append(f"sequence {seq} scan {scan_name(i)}: "
                                     f"length not divisible by 16 ({nbytes} bytes)")
                continue
            n = nbytes // 16
            total += n
            lpath = sdir / "labels" / f"{scan_name(i)}.label"
            if require_labels and lpath.exists():
                lbytes = lpath.stat().st_size
                if lbytes % 4:
                    report.errors.append(f"sequence {seq} scan {scan_name(i)}: "
                                         f"label length not divisible by 4 ({lbytes} bytes)")
                elif lbytes // 4 != n:
                    report.errors.append(f"sequence {seq} scan {scan_name(i)}: "
                                         f"{n} points but {lbytes // 4} labels")
        report.points[seq] = total
        poses = sdir / "poses.txt"
        if not poses.exists():
            report.errors.append(f"sequence {seq}: missing poses.txt")
        else:
            n_lines = sum(1 for ln in poses.read_text(encoding="ascii").splitlines() if ln.strip())
            if n_lines != len(bins):
                report.errors.append(f"sequence {seq}: poses.txt has {n_lines} lines for {len(bins)} scans")
    return report
