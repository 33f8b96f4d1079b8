"""Class distributions of datasets, per-actor point yields, and spawn planning.

The planner works in log10-proportion space: rare classes such as
motorcyclist sit around 1e-5 of all points, so an L1 distance on raw
proportions would ignore them entirely.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kittiio
from .taxonomy import VALIDATION_CLASSES, Taxonomy

EPS = 1e-8


class PlanError(ValueError):
    pass


@dataclass
class ClassDistribution:
    counts: np.ndarray  # (K,) over validation classes 1..K
    class_names: tuple[str, ...] = VALIDATION_CLASSES

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.class_names),):
            raise ValueError("counts must have one entry per validation class")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        tot = self.counts.sum()
        if tot == 0:
            return np.zeros(len(self.counts))
        return self.counts / tot

    def __add__(self, other: "ClassDistribution") -> "ClassDistribution":
        return ClassDistribution(self.counts + other.counts, self.class_names)

    def __getitem__(self, name: str) -> float:
        return float(self.proportions[self.class_names.index(name)])

    def count(self, name: str) -> int:
        return int(self.counts[self.class_names.index(name)])

    @classmethod
    def from_proportions(cls, props, scale: int = 10**12,
                         class_names=VALIDATION_CLASSES) -> "ClassDistribution":
        props = np.asarray(props, dtype=np.float64)
        return cls(np.rint(props / props.sum() * scale).astype(np.int64), tuple(class_names))


def count_labels(labels, taxonomy: Taxonomy) -> np.ndarray:
    v = taxonomy.remap_array(labels)
    c = np.bincount(v, minlength=taxonomy.n_validation + 1)
    return c[1:].astype(np.int64)


def measure(dataset_root, taxonomy: Taxonomy, sequences: Sequence[str] | None = None) -> ClassDistribution:
    """Per-class counts of remapped, non-IGNORE points over every scan of every sequence."""
    root = Path(dataset_root)
    seqs = list(sequences) if sequences is not None else kittiio.list_sequences(root)
    if not seqs:
        raise FileNotFoundError(f"{root}: no sequences found")
    counts = np.zeros(taxonomy.n_validation, dtype=np.int64)
    for seq in seqs:
        sdir = kittiio.sequence_dir(root, seq)
        bins = sorted((sdir / "velodyne").glob("*.bin"))
        if not bins:
            raise FileNotFoundError(f"sequence {seq}: no scans in {sdir / 'velodyne'}")
        for b in bins:
            lpath = sdir / "labels" / (b.stem + ".label")
            if not lpath.exists():
                raise FileNotFoundError(f"sequence {seq} scan {b.stem}: missing label file")
            n_points = b.stat().st_size // 16
            try:
                labels = kittiio.read_labels(lpath)
            except kittiio.FormatError as exc:
                raise kittiio.FormatError(f"sequence {seq} scan {b.stem}: {exc}") from None
            if len(labels) != n_points:
                raise kittiio.FormatError(
                    f"sequence {seq} scan {b.stem}: truncated label file "
                    f"({len(labels)} labels for {n_points} points)")
            counts += count_labels(labels, taxonomy)
    return ClassDistribution(counts, tuple(taxonomy.validation_classes))


def divergence(a: ClassDistribution, b: ClassDistribution, eps: float = EPS):
    """Per-class and total L1 distance between log10 proportions.

    Classes absent from both sides contribute exactly zero, so summing over
    all classes equals summing over the classes present in either.
    """
    if a.class_names != b.class_names:
        raise ValueError("distributions use different class orderings")
    per = np.abs(np.log10(a.proportions + eps) - np.log10(b.proportions + eps))
    present = (a.counts > 0) | (b.counts > 0)
    per = np.where(present, per, 0.0)
    return per, float(per.sum())


# ---------------------------------------------------------------- serialization

def format_distribution(dist: ClassDistribution) -> str:
    width = max(len(n) for n in dist.class_names)
    lines = [f"{'class':<{width}}  {'count':>14}  {'proportion':>12}"]
    for name, c, p in zip(dist.class_names, dist.counts, dist.proportions):
        lines.append(f"{name:<{width}}  {c:>14d}  {p:>12.6e}")
    lines.append(f"{'total':<{width}}  {dist.total:>14d}")
    return "\n".join(lines) + "\n"


def distribution_csv(dist: ClassDistribution) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "count", "proportion"])
    for name, c, p in zip(dist.class_names, dist.counts, dist.proportions):
        w.writerow([name, int(c), repr(float(p))])
    return buf.getvalue()


def parse_distribution(text: str, class_names=VALIDATION_CLASSES) -> ClassDistribution:
    """Parse a distribution written as CSV or as the whitespace text report.

    Rows need a class name and a count; a row may instead give only a
    proportion (``class,,0.25``), in which case all rows are read as
    proportions.
    """
    counts: dict[str, float] = {}
    props: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in (line.split(",") if "," in line else line.split())]
        if parts[0] in ("class", "total"):
            continue
        name = parts[0]
        if name not in class_names:
            raise ValueError(f"line {lineno}: unknown class {name!r}")
        try:
            if len(parts) > 1 and parts[1] != "":
                counts[name] = float(parts[1])
            if len(parts) > 2 and parts[2] != "":
                props[name] = float(parts[2])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed number in {line!r}") from None
    if counts and len(counts) == len({**counts, **props}):
        vec = np.array([counts.get(n, 0.0) for n in class_names])
        return ClassDistribution(np.rint(vec).astype(np.int64), tuple(class_names))
    if props:
        vec = np.array([props.get(n, 0.0) for n in class_names])
        return ClassDistribution.from_proportions(vec, class_names=class_names)
    raise ValueError("no distribution rows found")


def read_distribution(path, class_names=VALIDATION_CLASSES) -> ClassDistribution:
    return parse_distribution(Path(path).read_text(encoding="utf-8"), class_names)


# ---------------------------------------------------------------- yields

@dataclass
class YieldTable:
    """Mean points per spawned actor per scan, plus the zero-actor baseline.

    Both are keyed by raw class id; ``baseline`` holds mean points per scan
    of every raw class seen with no actors spawned.
    """

    yields: dict[int, float]
    baseline: dict[int, float]
    names: dict[int, str] = field(default_factory=dict)

    def scaled(self, factor: float) -> "YieldTable":
        return YieldTable({k: v * factor for k, v in self.yields.items()},
                          {k: v * factor for k, v in self.baseline.items()}, dict(self.names))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "raw_id", "name", "points_per_scan"])
        for kind, table in (("yield", self.yields), ("baseline", self.baseline)):
            for rid in sorted(table):
                w.writerow([kind, rid, self.names.get(rid, ""), repr(float(table[rid]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "YieldTable":
        yields, baseline, names = {}, {}, {}
        rows = csv.reader(ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#"))
        for row in rows:
            if row[0] == "kind":
                continue
            kind, rid, name, val = row
            target = {"yield": yields, "baseline": baseline}.get(kind)
            if target is None:
                raise ValueError(f"unknown row kind {kind!r}")
            target[int(rid)] = float(val)
            if name:
                names[int(rid)] = name
        return cls(yields, baseline, names)


def read_bounds(path, taxonomy: Taxonomy) -> dict[int, int]:
    """``class max_count`` per line (names or raw ids, CSV or whitespace)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in (line.split(",") if "," in line else line.split())]
        if parts[0] == "class":
            continue
        key = parts[0]
        rid = int(key) if key.isdigit() else taxonomy.raw_id(key)
        out[rid] = int(parts[1])
        if out[rid] < 0:
            raise ValueError(f"line {lineno}: negative bound for {key}")
    return out


# ---------------------------------------------------------------- planning

@dataclass
class _Model:
    base: np.ndarray  # (K,) predicted counts with zero actors
    ymat: np.ndarray  # (K, m) per-actor contribution of each adjustable class
    target_log: np.ndarray  # (Kc,) log10 of renormalised target over covered classes
    covered: np.ndarray  # (K,) bool

    def objective(self, n: np.ndarray) -> np.ndarray:
        """J for one plan (m,) or a batch of plans (B, m)."""
        n = np.atleast_2d(n).astype(np.float64)
        pred = self.base[None, :] + n @ self.ymat.T
        tot = pred.sum(axis=1, keepdims=True)
        p = np.divide(pred, tot, out=np.zeros_like(pred), where=tot > 0)
        return np.abs(np.log10(p[:, self.covered] + EPS) - self.target_log[None, :]).sum(axis=1)


def _model(target: ClassDistribution, yields: YieldTable, classes: Sequence[int],
           taxonomy: Taxonomy) -> _Model:
    k = taxonomy.n_validation
    base = np.zeros(k)
    for rid, v in yields.baseline.items():
        slot = int(taxonomy.remap_array([rid])[0])
        if slot:
            base[slot - 1] += v
    ymat = np.zeros((k, len(classes)))
    for j, rid in enumerate(classes):
        slot = int(taxonomy.remap_array([rid])[0])
        if slot:
            ymat[slot - 1, j] = yields.yields[rid]
    covered = taxonomy.covered_mask()
    t = target.counts[covered].astype(np.float64)
    tp = t / t.sum() if t.sum() > 0 else t
    return _Model(base, ymat, np.log10(tp + EPS), covered)


def predicted_distribution(plan: Mapping[int, int], yields: YieldTable,
                           taxonomy: Taxonomy) -> np.ndarray:
    """Predicted validation-class counts per scan for a plan under the linear yield model."""
    k = taxonomy.n_validation
    pred = np.zeros(k)
    for rid, v in yields.baseline.items():
        slot = int(taxonomy.remap_array([rid])[0])
        if slot:
            pred[slot - 1] += v
    for rid, n in plan.items():
        slot = int(taxonomy.remap_array([rid])[0])
        if slot and rid in yields.yields:
            pred[slot - 1] += n * yields.yields[rid]
    return pred


def plan_objective(plan: Mapping[int, int], target: ClassDistribution, yields: YieldTable,
                   taxonomy: Taxonomy) -> float:
    classes = sorted(yields.yields)
    model = _model(target, yields, classes, taxonomy)
    n = np.array([plan.get(c, 0) for c in classes], dtype=np.float64)
    return float(model.objective(n)[0])


def _improve(model: _Model, n: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, float]:
    """Greedy descent on single-coordinate moves, then a {-1,0,+1}^m neighbourhood."""
    m = len(n)
    best = float(model.objective(n)[0])
    steps = [1]
    while steps[-1] * 2 <= max(int(ub.max()), 1):
        steps.append(steps[-1] * 2)
    if m <= 6:
        deltas = np.array([d for d in itertools.product((-1, 0, 1), repeat=m) if any(d)])
    else:
        deltas = np.concatenate([np.eye(m, dtype=int), -np.eye(m, dtype=int)] + [
            (np.eye(m, dtype=int)[i] * si + np.eye(m, dtype=int)[j] * sj)[None]
            for i in range(m) for j in range(i + 1, m) for si in (-1, 1) for sj in (-1, 1)])
    while True:
        improved = False
        # greedy: best single-coordinate jump of any power-of-two size
        while True:
            cands = []
            for j in range(m):
                for s in steps:
                    for sign in (1, -1):
                        c = n.copy()
                        c[j] += sign * s
                        if 0 <= c[j] <= ub[j]:
                            cands.append(c)
            if not cands:
                break
            cands = np.array(cands)
            vals = model.objective(cands)
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-15:
                n, best = cands[i], float(vals[i])
                improved = True
            else:
                break
        # exact line search along each coordinate
        for j in range(m):
            line = np.repeat(n[None], ub[j] + 1, axis=0)
            line[:, j] = np.arange(ub[j] + 1)
            vals = model.objective(line)
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-15:
                n, best = line[i], float(vals[i])
                improved = True
        # local search on joint +-1 moves
        cands = n[None] + deltas
        ok = np.all((cands >= 0) & (cands <= ub[None]), axis=1)
        if ok.any():
            cands = cands[ok]
            vals = model.objective(cands)
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-15:
                n, best = cands[i], float(vals[i])
                improved = True
        if not improved:
            return n, best


def _proportional_start(model: _Model, ub: np.ndarray) -> np.ndarray:
    """Round the plan that would hit the target exactly if occupancy were free."""
    actor_slots = model.ymat.sum(axis=1) > 0
    static = model.covered & ~actor_slots & (model.base > 0)
    tp = np.zeros(len(model.base))
    tp[model.covered] = 10.0 ** model.target_log - EPS
    if not static.any() or tp[static].sum() <= 0:
        return np.zeros(len(ub), dtype=np.int64)
    total = model.base[static].sum() / tp[static].sum()
    n = np.zeros(len(ub))
    share = np.maximum((model.ymat > 0).sum(axis=1), 1)
    for j in range(len(ub)):
        slot = np.flatnonzero(model.ymat[:, j])
        if len(slot) == 0:
            continue
        s = slot[0]
        want = (tp[s] * total - model.base[s]) / share[s]
        n[j] = want / model.ymat[s, j]
    return np.clip(np.rint(n), 0, ub).astype(np.int64)


def plan_spawns(target: ClassDistribution, yields: YieldTable, bounds: Mapping[int, int],
                taxonomy: Taxonomy) -> dict[int, int]:
    """Actor counts per adjustable raw class that bring the predicted distribution closest to ``target``.

    Minimises the sum over covered validation classes of
    ``|log10(p_pred + 1e-8) - log10(p_target + 1e-8)|`` with the target
    renormalised over the covered classes. Classes missing from ``bounds``
    are fixed at zero.
    """
    if not yields.yields:
        raise PlanError("yield table has no adjustable classes")
    classes = sorted(yields.yields)
    ub = np.array([int(bounds.get(c, 0)) for c in classes], dtype=np.int64)
    if np.any(ub < 0):
        raise PlanError("bounds must be non-negative")
    model = _model(target, yields, classes, taxonomy)
    best_n, best = None, np.inf
    for start in (np.zeros(len(classes), dtype=np.int64), _proportional_start(model, ub),
                  ub.copy()):
        n, val = _improve(model, start.astype(np.int64), ub)
        if val < best - 1e-15 or (abs(val - best) <= 1e-15 and tuple(n) < tuple(best_n)):
            best_n, best = n, val
    return {c: int(v) for c, v in zip(classes, best_n)}



# ---------------------------------------------------------------- calibration

PROBE_ACTORS = 24
PROBE_REPLICATES = 2


def probe_poses(scene, n_probe_scans: int, config, seed: int):
    """Probe poses spread evenly over the whole ego loop."""
    from .scene import ego_trajectory, route_length

    spacing = route_length(scene.route) / n_probe_scans
    return ego_trajectory(scene, n_probe_scans, speed=spacing * config.rotation_rate,
                          rate=config.rotation_rate, seed=seed)


def mean_raw_counts(scene, poses, config, seed: int) -> dict[int, float]:
    """Mean points per scan of every raw class over the given poses."""
    from .sensor import scan_at

    totals: dict[int, int] = {}
    for i, pose in enumerate(poses):
        scan = scan_at(scene, config, pose, t=i / config.rotation_rate,
                       rng_seed=int(np.random.SeedSequence([seed, 3, i]).generate_state(1)[0]))
        ids, cnt = np.unique(scan.semantic, return_counts=True)
        for rid, c in zip(ids.tolist(), cnt.tolist()):
            totals[rid] = totals.get(rid, 0) + c
    return {rid: c / len(poses) for rid, c in sorted(totals.items())}


def calibrate_yields(template, config, taxonomy: Taxonomy, n_probe_scans: int, seed: int,
                     classes: Sequence[int] | None = None, probe_actors: int = PROBE_ACTORS,
                     replicates: int = PROBE_REPLICATES) -> YieldTable:
    """Estimate per-actor yields by spawning ``k`` actors of one class at a time.

    ``yield(c) = (mean points of c with k actors - mean with none) / k`` with
    ``k = min(probe_actors, capacity)``. Every run shares the static world
    and the probe poses, which are spread evenly over the ego loop. The
    k-actor mean is averaged over ``replicates`` placements; the first one
    is the placement ``generate_scene`` itself uses for this seed, the rest
    are independent redraws (a handful of actors close to the route
    dominate any single draw).
    """
    from .scene import capacity, generate_scene

    if n_probe_scans < 1:
        raise ValueError("n_probe_scans must be >= 1")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    base_scene = generate_scene(template, {}, taxonomy, seed)
    poses = probe_poses(base_scene, n_probe_scans, config, seed)
    baseline = mean_raw_counts(base_scene, poses, config, seed)
    todo = [c.raw_id for c in taxonomy.adjustable] if classes is None else list(classes)
    yields = {}
    for rid in todo:
        name = taxonomy.by_id(rid).name
        k = min(probe_actors, capacity(template, name))
        if k == 0:
            yields[rid] = 0.0
            continue
        got = 0.0
        for r in range(replicates):
            scene = generate_scene(template, {rid: k}, taxonomy, seed, actor_seed=None if r == 0 else r)
            got += mean_raw_counts(scene, poses, config, seed).get(rid, 0.0) / replicates
        yields[rid] = max(0.0, (got - baseline.get(rid, 0.0)) / k)
    names = {c.raw_id: c.name for c in taxonomy.classes}
    return YieldTable(yields, baseline, {r: names[r] for r in set(yields) | set(baseline) if r in names})
