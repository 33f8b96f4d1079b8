"""Dataset generation: scenes, trajectories, scans and the on-disk layout.

A finished output tree ends with ``manifest.txt``. It is removed when a run
starts and written only after every sequence is complete, so its absence
marks partial output.

Manifest format (UTF-8, one ``key = value`` per line)::

    format = synthlidar-manifest 1
    config_hash = <sha256 of the canonical job description>
    sequences = 2
    total_scans = 600
    total_points = 77123456

    [sequence 00]
    template = demo
    scans = 300
    seed = 0
    points = 38561728
    plan = car:4 person:6

Blocks appear in sequence-id order. ``points`` is the exact sum of per-scan
point counts.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kittiio
from .distribution import ClassDistribution, count_labels
from .scene import MapTemplate, ego_trajectory, generate_scene, get_template, template_names
from .sensor import LidarConfig, scan_at, sensor_pose
from .taxonomy import Taxonomy, default_taxonomy, read_taxonomy

MANIFEST = "manifest.txt"
MANIFEST_FORMAT = "synthlidar-manifest 1"


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SequenceSpec:
    seq_id: int
    template: MapTemplate
    n_scans: int
    plan: tuple[tuple[int, int], ...] = ()  # (raw_id, count), sorted
    seed: int = 0
    speed: float = 10.0

    @property
    def name(self) -> str:
        return f"{self.seq_id:02d}"

    def plan_dict(self) -> dict[int, int]:
        return dict(self.plan)


@dataclass
class GenerationJob:
    sequences: list[SequenceSpec]
    lidar: LidarConfig = field(default_factory=LidarConfig)
    taxonomy: Taxonomy = field(default_factory=default_taxonomy)
    out: Path = Path("out")

    def __post_init__(self):
        self.out = Path(self.out)
        ids = [s.seq_id for s in self.sequences]
        if not ids:
            raise GenerationError("job has no sequences")
        if len(set(ids)) != len(ids):
            raise GenerationError("duplicate sequence ids: " + ", ".join(
                f"{i:02d}" for i in sorted({i for i in ids if ids.count(i) > 1})))
        for s in self.sequences:
            if s.n_scans < 1:
                raise GenerationError(f"sequence {s.name}: scan count must be >= 1")
            if not 0 <= s.seq_id <= 99:
                raise GenerationError(f"sequence id {s.seq_id} outside 00..99")
            for rid, n in s.plan:
                if n < 0:
                    raise GenerationError(f"sequence {s.name}: negative count for class {rid}")
                cls = self.taxonomy.by_id(rid)
                if cls is None or not cls.adjustable:
                    raise GenerationError(f"sequence {s.name}: class {rid} is not adjustable")
        self.sequences = sorted(self.sequences, key=lambda s: s.seq_id)

    @property
    def total_scans(self) -> int:
        return sum(s.n_scans for s in self.sequences)

    def describe(self) -> dict:
        """Canonical, JSON-serializable description used for the config hash."""
        return {
            "lidar": self.lidar.to_dict(),
            "taxonomy": [(c.raw_id, c.name, c.kind, c.remap_target, c.adjustable)
                         for c in self.taxonomy.classes],
            "sequences": [{"id": s.seq_id, "template": _template_dict(s.template),
                           "scans": s.n_scans, "plan": list(s.plan), "seed": s.seed,
                           "speed": s.speed} for s in self.sequences],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _template_dict(tpl: MapTemplate) -> dict:
    from dataclasses import asdict
    return asdict(tpl)


@dataclass
class SequenceResult:
    seq_id: int
    n_scans: int
    points: int
    counts: np.ndarray  # validation-class point counts

    @property
    def name(self) -> str:
        return f"{self.seq_id:02d}"


@dataclass
class GenerationReport:
    job: GenerationJob
    results: list[SequenceResult]

    @property
    def total_points(self) -> int:
        return sum(r.points for r in self.results)

    @property
    def total_scans(self) -> int:
        return sum(r.n_scans for r in self.results)

    def distribution(self) -> ClassDistribution:
        counts = sum((r.counts for r in self.results), np.zeros(self.job.taxonomy.n_validation, dtype=np.int64))
        return ClassDistribution(counts, tuple(self.job.taxonomy.validation_classes))


def scan_seed(seq_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seq_seed, 2, index]).generate_state(1)[0])


def _plan_text(spec: SequenceSpec, taxonomy: Taxonomy) -> str:
    items = [f"{taxonomy.by_id(r).name}:{n}" for r, n in spec.plan if n > 0]
    return " ".join(items) if items else "none"


def render_manifest(job: GenerationJob, results: Sequence[SequenceResult] | None = None) -> str:
    """Manifest text. Without ``results`` the point totals are omitted (dry run)."""
    lines = [f"format = {MANIFEST_FORMAT}",
             f"config_hash = {job.config_hash()}",
             f"sequences = {len(job.sequences)}",
             f"total_scans = {job.total_scans}"]
    by_id = {r.seq_id: r for r in results or ()}
    if results is not None:
        lines.append(f"total_points = {sum(r.points for r in results)}")
    for s in job.sequences:
        lines += ["", f"[sequence {s.name}]",
                  f"template = {s.template.name}",
                  f"scans = {s.n_scans}",
                  f"seed = {s.seed}"]
        if s.seq_id in by_id:
            lines.append(f"points = {by_id[s.seq_id].points}")
        lines.append(f"plan = {_plan_text(s, job.taxonomy)}")
    return "\n".join(lines) + "\n"


def read_manifest(path) -> dict:
    """Parse a manifest into ``{"header": {...}, "sequences": {"00": {...}}}``."""
    header, seqs, cur = {}, {}, None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("[sequence ") and line.endswith("]"):
            cur = seqs.setdefault(line[10:-1].strip(), {})
            continue
        if " = " not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split(" = ", 1)
        (header if cur is None else cur)[k.strip()] = v.strip()
    return {"header": header, "sequences": seqs}


def _generate_sequence(spec: SequenceSpec, lidar: LidarConfig, taxonomy: Taxonomy, out: Path) -> SequenceResult:
    sdir = kittiio.sequence_dir(out, spec.name)
    try:
        scene = generate_scene(spec.template, spec.plan_dict(), taxonomy, spec.seed)
        poses = ego_trajectory(scene, spec.n_scans, speed=spec.speed, rate=lidar.rotation_rate, seed=spec.seed)
    except Exception as e:
        raise GenerationError(f"sequence {spec.name}: {e}") from e
    (sdir / "velodyne").mkdir(parents=True, exist_ok=True)
    (sdir / "labels").mkdir(parents=True, exist_ok=True)
    counts = np.zeros(taxonomy.n_validation, dtype=np.int64)
    points = 0
    rel = []
    s0_inv = np.linalg.inv(sensor_pose(poses[0], lidar))
    for i, pose in enumerate(poses):
        try:
            scan = scan_at(scene, lidar, pose, t=i / lidar.rotation_rate, rng_seed=scan_seed(spec.seed, i))
            kittiio.write_scan(scan.points, sdir / "velodyne" / f"{kittiio.scan_name(i)}.bin")
            kittiio.write_labels((scan.semantic, scan.instance), sdir / "labels" / f"{kittiio.scan_name(i)}.label")
        except Exception as e:
            raise GenerationError(f"sequence {spec.name} scan {kittiio.scan_name(i)}: {e}") from e
        counts += count_labels(scan.semantic, taxonomy)
        points += len(scan)
        rel.append(s0_inv @ sensor_pose(pose, lidar))
    kittiio.write_poses(rel, sdir / "poses.txt")
    kittiio.write_calib(sdir / "calib.txt")
    kittiio.write_times(spec.n_scans, lidar.rotation_rate, sdir / "times.txt")
    return SequenceResult(spec.seq_id, spec.n_scans, points, counts)


def _worker(args):
    spec, lidar, taxonomy, out = args
    return _generate_sequence(spec, lidar, taxonomy, out)


def run_generation(job: GenerationJob, jobs: int = 1) -> GenerationReport:
    """Generate every sequence of ``job`` under ``job.out`` and write the manifest last.

    With ``jobs > 1`` sequences run in separate processes; output is
    byte-identical to a single-worker run.
    """
    out = job.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / MANIFEST
    if manifest.exists():
        manifest.unlink()
    tasks = [(s, job.lidar, job.taxonomy, out) for s in job.sequences]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    manifest.write_text(render_manifest(job, results), encoding="utf-8")
    return GenerationReport(job, results)


# ---------------------------------------------------------------- config files

def parse_plan(text: str, taxonomy: Taxonomy) -> dict[int, int]:
    """``"car:4, person:6"`` (names or raw ids; commas or spaces) -> {raw_id: count}."""
    plan = {}
    for item in text.replace(",", " ").split():
        if item.lower() == "none":
            continue
        if ":" not in item:
            raise ValueError(f"plan entry {item!r}: expected class:count")
        key, val = item.split(":", 1)
        try:
            rid = int(key) if key.isdigit() else taxonomy.raw_id(key)
        except KeyError:
            raise ValueError(f"plan entry {item!r}: unknown class {key!r}") from None
        n = int(val)
        if n < 0:
            raise ValueError(f"plan entry {item!r}: negative count")
        plan[rid] = plan.get(rid, 0) + n
    return plan


def read_plan_file(path, taxonomy: Taxonomy) -> dict[int, int]:
    """``class count`` per line, the same layout as a bounds file."""
    from .distribution import read_bounds
    return read_bounds(path, taxonomy)


def format_plan(plan: Mapping[int, int], taxonomy: Taxonomy) -> str:
    return "".join(f"{taxonomy.by_id(r).name} {n}\n" for r, n in sorted(plan.items()))


def _resolve_template(value: str, base: Path) -> MapTemplate:
    if value in template_names():
        return get_template(value)
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    return get_template(str(p))


def parse_job_config(text: str, out, base_dir=".", seed: int = 0) -> GenerationJob:
    """Build a job from a generation config.

    Sections: ``[job]`` (``taxonomy``, ``speed``), ``[lidar]`` (any
    LidarConfig field) and one ``[sequence NN]`` per sequence with
    ``template``, ``scans``, optional ``seed``, ``speed``, ``plan`` and
    ``plan_file``. A sequence's seed is ``seed + <its seed key>``, the key
    defaulting to the sequence's position, so ``seed`` shifts every sequence.
    Relative paths resolve against ``base_dir``.
    """
    base = Path(base_dir)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.read_string(text)
    unknown = [s for s in cp.sections() if s not in ("job", "lidar") and not s.startswith("sequence ")]
    if unknown:
        raise ValueError(f"unknown config section [{unknown[0]}]")
    jsec = cp["job"] if "job" in cp else {}
    tax_path = jsec.get("taxonomy", "default")
    if tax_path == "default":
        taxonomy = default_taxonomy()
    else:
        p = Path(tax_path)
        taxonomy = read_taxonomy(p if p.is_absolute() else base / p)
    speed = float(jsec.get("speed", 10.0))
    lidar = LidarConfig.from_mapping(dict(cp["lidar"])) if "lidar" in cp else LidarConfig()

    specs = []
    for pos, name in enumerate(s for s in cp.sections() if s.startswith("sequence ")):
        sec = cp[name]
        sid = name.split(None, 1)[1].strip()
        if not sid.isdigit():
            raise ValueError(f"[{name}]: sequence id must be numeric")
        for key in sec:
            if key not in ("template", "scans", "seed", "speed", "plan", "plan_file"):
                raise ValueError(f"[{name}]: unknown key {key!r}")
        if "template" not in sec or "scans" not in sec:
            raise ValueError(f"[{name}]: 'template' and 'scans' are required")
        plan = parse_plan(sec.get("plan", ""), taxonomy)
        if "plan_file" in sec:
            p = Path(sec["plan_file"])
            for rid, n in read_plan_file(p if p.is_absolute() else base / p, taxonomy).items():
                plan[rid] = plan.get(rid, 0) + n
        specs.append(SequenceSpec(
            seq_id=int(sid),
            template=_resolve_template(sec["template"], base),
            n_scans=int(sec["scans"]),
            plan=tuple(sorted((r, n) for r, n in plan.items() if n > 0)),
            seed=seed + int(sec.get("seed", pos)),
            speed=float(sec.get("speed", speed)),
        ))
    return GenerationJob(specs, lidar, taxonomy, Path(out))


def read_job_config(path, out, seed: int = 0) -> GenerationJob:
    path = Path(path)
    return parse_job_config(path.read_text(encoding="utf-8"), out, path.parent, seed)


# ---------------------------------------------------------------- recipes

FULL_SCALE_SCANS = 6000
FULL_SCALE_SEQUENCES = 8


def full_scale_job(out, plans: Mapping[str, Mapping[int, int]] | None = None, seed: int = 0,
                    lidar: LidarConfig | None = None, taxonomy: Taxonomy | None = None) -> GenerationJob:
    """Eight sequences of 6000 scans over the seven shipped maps.

    The largest template (by ground area) is used for two sequences.
    ``plans`` maps template names to spawn plans (default: no actors).
    """
    names = sorted(template_names())
    tpls = [get_template(n) for n in names]
    largest = max(tpls, key=lambda t: (t.extent[0] * t.extent[1], t.name))
    order = tpls + [largest]
    plans = plans or {}
    specs = [SequenceSpec(i, t, FULL_SCALE_SCANS,
                          tuple(sorted(plans.get(t.name, {}).items())), seed + i)
             for i, t in enumerate(order)]
    return GenerationJob(specs, lidar or LidarConfig(), taxonomy or default_taxonomy(), Path(out))


def default_jobs() -> int:
    return os.cpu_count() or 1
