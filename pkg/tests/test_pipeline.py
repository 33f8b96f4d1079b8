import hashlib

import numpy as np
import pytest

from synthlidar import kittiio, pipeline
from synthlidar.distribution import measure
from synthlidar.pipeline import (GenerationError, GenerationJob, SequenceSpec, format_plan,
                                 full_scale_job, parse_job_config, parse_plan, read_job_config,
                                 read_plan_file,
                                 read_manifest, render_manifest, run_generation)
from synthlidar.scene import get_template
from synthlidar.sensor import LidarConfig


def tree_digest(root):
    h = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return h


def test_single_sequence_cardinality(tmp_path, tax):
    job = GenerationJob([SequenceSpec(0, get_template("demo"), 3, ((tax.raw_id("car"), 2),), 0)],
                        taxonomy=tax, out=tmp_path)
    rep = run_generation(job)
    sdir = tmp_path / "sequences" / "00"
    assert len(list((sdir / "velodyne").glob("*.bin"))) == 3
    assert len(list((sdir / "labels").glob("*.label"))) == 3
    assert len((sdir / "poses.txt").read_text().splitlines()) == 3
    assert len((sdir / "times.txt").read_text().splitlines()) == 3
    assert (sdir / "calib.txt").exists()
    kittiio.validate_layout(tmp_path)
    assert rep.total_scans == 3
    poses = kittiio.read_poses(sdir / "poses.txt")
    assert np.allclose(poses[0], np.eye(4), atol=1e-12)


def test_manifest_matches_disk(small_dataset, tax):
    root, rep = small_dataset
    m = read_manifest(root / "manifest.txt")
    assert m["header"]["format"] == pipeline.MANIFEST_FORMAT
    assert int(m["header"]["total_scans"]) == 6
    assert int(m["header"]["total_points"]) == rep.total_points
    total = 0
    for seq, block in m["sequences"].items():
        bins = sorted((kittiio.sequence_dir(root, seq) / "velodyne").glob("*.bin"))
        assert int(block["scans"]) == len(bins)
        pts = sum(b.stat().st_size // 16 for b in bins)
        assert int(block["points"]) == pts
        total += pts
    assert total == rep.total_points
    assert np.array_equal(measure(root, tax).counts, rep.distribution().counts)
    assert m["header"]["config_hash"] == rep.job.config_hash()


def test_rerun_byte_identical(tmp_path, small_job_factory, small_dataset):
    root, _ = small_dataset
    run_generation(small_job_factory(tmp_path))
    assert tree_digest(tmp_path) == tree_digest(root)


def test_parallel_equals_serial(tmp_path, small_job_factory, small_dataset):
    root, _ = small_dataset
    run_generation(small_job_factory(tmp_path), jobs=2)
    assert tree_digest(tmp_path) == tree_digest(root)


def test_failure_leaves_no_manifest(tmp_path, tax, monkeypatch):
    job = GenerationJob([SequenceSpec(4, get_template("demo"), 3, (), 0)], taxonomy=tax, out=tmp_path)
    (tmp_path / "manifest.txt").write_text("stale\n")
    real = pipeline.scan_at

    def flaky(scene, cfg, pose, t=0.0, rng_seed=0):
        if t > 0.05:
            raise RuntimeError("boom")
        return real(scene, cfg, pose, t=t, rng_seed=rng_seed)

    monkeypatch.setattr(pipeline, "scan_at", flaky)
    with pytest.raises(GenerationError, match="sequence 04 scan 000001: boom"):
        run_generation(job)
    assert not (tmp_path / "manifest.txt").exists()


def test_job_validation(tax):
    demo = get_template("demo")
    with pytest.raises(GenerationError, match="duplicate"):
        GenerationJob([SequenceSpec(1, demo, 2), SequenceSpec(1, demo, 2)], taxonomy=tax)
    with pytest.raises(GenerationError, match=">= 1"):
        GenerationJob([SequenceSpec(0, demo, 0)], taxonomy=tax)
    with pytest.raises(GenerationError, match="not adjustable"):
        GenerationJob([SequenceSpec(0, demo, 1, ((tax.raw_id("road"), 1),))], taxonomy=tax)
    with pytest.raises(GenerationError):
        GenerationJob([], taxonomy=tax)


def test_config_hash_sensitivity(tax):
    demo = get_template("demo")
    a = GenerationJob([SequenceSpec(0, demo, 2, (), 0)], taxonomy=tax)
    b = GenerationJob([SequenceSpec(0, demo, 2, (), 1)], taxonomy=tax)
    c = GenerationJob([SequenceSpec(0, demo, 2, (), 0)], lidar=LidarConfig(range_noise_sigma=0.02), taxonomy=tax)
    assert a.config_hash() == GenerationJob([SequenceSpec(0, demo, 2, (), 0)], taxonomy=tax).config_hash()
    assert len({a.config_hash(), b.config_hash(), c.config_hash()}) == 3


def test_full_scale_recipe(tmp_path):
    job = full_scale_job(tmp_path)
    assert job.total_scans == 48_000
    assert len(job.sequences) == 8
    names = [s.template.name for s in job.sequences]
    assert len(set(names)) == 7
    m = render_manifest(job)
    assert "total_scans = 48000" in m and "total_points" not in m


def test_full_scale_config_file(tmp_path):
    from pathlib import Path
    cfg = Path(__file__).parents[1] / "configs" / "full_scale.cfg"
    job = read_job_config(cfg, tmp_path)
    assert job.total_scans == 48_000
    assert len({s.template.name for s in job.sequences}) == 7


def test_plan_text(tmp_path, tax):
    plan = parse_plan("car:4, person:6 moving-car:1", tax)
    assert plan == {tax.raw_id("car"): 4, tax.raw_id("person"): 6, tax.raw_id("moving-car"): 1}
    (tmp_path / "plan.txt").write_text(format_plan(plan, tax))
    assert read_plan_file(tmp_path / "plan.txt", tax) == plan
    assert parse_plan("none", tax) == {}
    for bad in ("car", "car:-1", "nosuch:1", "car:x"):
        with pytest.raises(ValueError):
            parse_plan(bad, tax)


CFG = """
[job]
speed = 8

[lidar]
range_noise_sigma = 0.02

[sequence 03]
template = demo
scans = 4
plan = car:2

[sequence 01]
template = suburb
scans = 2
seed = 10
speed = 12
plan_file = p.txt
"""


def test_parse_job_config(tmp_path, tax):
    (tmp_path / "p.txt").write_text("truck 2\nperson 1\n")
    job = parse_job_config(CFG, tmp_path / "out", tmp_path, seed=100)
    s1, s3 = job.sequences
    assert (s1.seq_id, s3.seq_id) == (1, 3)
    assert s3.seed == 100 and s1.seed == 110
    assert s3.speed == 8.0 and s1.speed == 12.0
    assert s1.plan_dict() == {tax.raw_id("truck"): 2, tax.raw_id("person"): 1}
    assert job.lidar.range_noise_sigma == 0.02
    assert job.total_scans == 6


@pytest.mark.parametrize("text,match", [
    ("[sequence 00]\ntemplate = demo\n", "required"),
    ("[sequence 00]\ntemplate = demo\nscans = 1\ncolour = red\n", "unknown key"),
    ("[sequnce 00]\n", "unknown config section"),
    ("[sequence xx]\ntemplate = demo\nscans = 1\n", "numeric"),
])
def test_config_errors(tmp_path, text, match):
    with pytest.raises(ValueError, match=match):
        parse_job_config(text, tmp_path)


def test_config_unknown_template(tmp_path):
    with pytest.raises(Exception):
        parse_job_config("[sequence 00]\ntemplate = atlantis\nscans = 1\n", tmp_path)
