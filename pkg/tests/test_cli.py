import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from synthlidar import kittiio
from synthlidar.cli import main

CONFIGS = Path(__file__).parents[1] / "configs"


def test_validate_ok(small_dataset, capsys):
    root, _ = small_dataset
    assert main(["validate", "--dataset", str(root)]) == 0
    assert "layout ok" in capsys.readouterr().out


def test_validate_broken(tmp_path, small_dataset, capsys):
    root, _ = small_dataset
    shutil.copytree(root, tmp_path / "d")
    (tmp_path / "d/sequences/01/labels/000002.label").unlink()
    assert main(["validate", "--dataset", str(tmp_path / "d")]) == 1
    err = capsys.readouterr().err
    assert "01" in err and "000002" in err


def test_eval_perfect(small_dataset, capsys, tmp_path):
    root, _ = small_dataset
    rep = tmp_path / "iou.csv"
    assert main(["eval", "--gt", str(root), "--pred", str(root), "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    assert out.strip().splitlines()[-1].split() == ["mIoU", "100.0"]
    assert rep.read_text().splitlines()[0] == "class,iou_percent,tp,fp,fn"
    assert rep.with_suffix(".png").stat().st_size > 0


def test_compare_self(small_dataset, capsys, tmp_path):
    root, _ = small_dataset
    rep = tmp_path / "cmp.csv"
    assert main(["compare", "--a", str(root), "--b", str(root), "--report", str(rep)]) == 0
    assert "total divergence: 0.000000" in capsys.readouterr().out
    assert rep.read_text().splitlines()[-1] == "total,,,0.0"
    assert rep.with_suffix(".png").exists()


def test_stats_report(small_dataset, capsys, tmp_path):
    root, rep = small_dataset
    out_csv = tmp_path / "stats.csv"
    assert main(["stats", "--dataset", str(root), "--report", str(out_csv)]) == 0
    assert "road" in capsys.readouterr().out
    # the stats CSV is itself a valid compare input
    assert main(["compare", "--a", str(out_csv), "--b", str(root)]) == 0
    assert "total divergence: 0.000000" in capsys.readouterr().out
    assert out_csv.with_suffix(".png").exists()


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["validate"]) == 2
    assert main(["validate", "--dataset", "x", "--bogus"]) == 2
    assert main(["generate", "--config", "c", "--out", "o", "--jobs", "0"]) == 2
    assert "usage" in capsys.readouterr().err


def test_module_error(tmp_path, capsys):
    assert main(["stats", "--dataset", str(tmp_path)]) == 1
    assert "synthlidar stats: error:" in capsys.readouterr().err
    assert main(["eval", "--gt", str(tmp_path), "--pred", str(tmp_path / "nope")]) == 1


def test_generate_and_dry_run(tmp_path, capsys):
    cfg = tmp_path / "job.cfg"
    cfg.write_text("[sequence 00]\ntemplate = demo\nscans = 2\nplan = car:3\n")
    out = tmp_path / "ds"
    assert main(["generate", "--config", str(cfg), "--out", str(out), "--dry-run"]) == 0
    assert "total_scans = 2" in capsys.readouterr().out
    assert not out.exists()
    rep = tmp_path / "gen.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out), "--jobs", "1",
                 "--report", str(rep)]) == 0
    assert (out / "manifest.txt").exists()
    assert kittiio.validate_layout(out).ok
    assert rep.exists() and rep.with_suffix(".png").exists()


def test_generate_bad_config_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "job.cfg"
    cfg.write_text("[sequence 00]\ntemplate = demo\nscans = 2\nplan = road:3\n")
    out = tmp_path / "ds"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_plan_command(tmp_path, tax, capsys):
    y = tmp_path / "y.csv"
    y.write_text(f"kind,raw_id,name,points_per_scan\nyield,{tax.raw_id('car')},car,100.0\n"
                 f"baseline,{tax.raw_id('road')},road,1000.0\n")
    t = tmp_path / "t.csv"
    t.write_text("class,count,proportion\ncar,700,\nroad,1000,\n")
    b = tmp_path / "b.txt"
    b.write_text("car 50\n")
    plan = tmp_path / "plan.txt"
    assert main(["plan", "--target", str(t), "--yields", str(y), "--bounds", str(b),
                 "--out", str(plan), "--report", str(tmp_path / "plan.csv")]) == 0
    assert plan.read_text() == "car 7\n"
    assert (tmp_path / "plan.png").exists()


def test_calibrate_command(tmp_path, capsys):
    out = tmp_path / "y.csv"
    assert main(["calibrate", "--template", "demo", "--scans", "1", "--out", str(out),
                 "--report", str(tmp_path / "cal.csv")]) == 0
    text = out.read_text()
    assert text.startswith("kind,raw_id,name,points_per_scan")
    assert "yield" in text and "baseline" in text
    assert (tmp_path / "cal.png").exists()


def test_lt_index(small_dataset, tmp_path, capsys):
    root, _ = small_dataset
    out = tmp_path / "lt.txt"
    assert main(["lt-index", "--dataset", str(root), "--n", "2", "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ["00 000000", "00 000001", "01 000000", "01 000001"]


def test_module_entry_point(small_dataset):
    root, _ = small_dataset
    r = subprocess.run([sys.executable, "-m", "synthlidar", "validate", "--dataset", str(root)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
