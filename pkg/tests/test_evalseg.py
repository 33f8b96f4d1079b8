import numpy as np
import pytest

from synthlidar import kittiio
from synthlidar.evalseg import ConfusionMatrix, confusion, evaluate_dirs, iou_report, mean_iou
from synthlidar.taxonomy import validation_id

from .conftest import random_taxonomy
from .oracles import brute_iou

SPVCNN = [95.7, 47.7, 49.5, 47.2, 48.3, 64.1, 66.7, 48.2, 88.5, 57.7, 70.7, 23.2, 90.1, 63.9, 84.5, 67.7,
          69.0, 53.1, 62.1]
SSV3_F = [84.2, 22.8, 28.8, 4.2, 15.6, 38.2, 33.4, 9.0, 88.1, 51.2, 68.9, 21.8, 76.7, 44.6, 76.6, 44.9,
          61.9, 31.0, 35.3]


def test_perfect_prediction_diagonal(tax):
    rng = np.random.default_rng(0)
    raw = np.array([c.raw_id for c in tax.classes])
    gt = rng.choice(raw, 10_000)
    cm = confusion(gt, gt, tax)
    off = cm.counts[:, :19] - np.diag(np.diag(cm.counts[:, :19]))
    assert off.sum() == 0 and cm.counts[:, 19].sum() == 0
    rep = iou_report(cm)
    assert np.all(rep.iou[rep.defined] == 1.0) and rep.miou == 1.0


def test_all_ignore_gt(tax):
    gt = np.full(100, tax.raw_id("sky"))
    cm = confusion(gt, np.full(100, tax.raw_id("road")), tax)
    assert cm.total == 0
    assert not iou_report(cm).defined.any()


def test_six_point_hand_case(tax):
    road, car = tax.raw_id("road"), tax.raw_id("car")
    gt = [road, road, road, car, car, car]
    pred = [road, road, car, car, car, road]
    tp, fp, fn = confusion(gt, pred, tax).tp_fp_fn()
    r, c = validation_id("road") - 1, validation_id("car") - 1
    assert (tp[r], fp[r], fn[r]) == (2, 1, 1)
    assert (tp[c], fp[c], fn[c]) == (2, 1, 1)
    rep = iou_report(confusion(gt, pred, tax))
    assert rep.iou[r] == 0.5 and rep.iou[c] == 0.5
    assert rep.miou == 0.5  # every other class undefined and excluded


def test_ignore_prediction_is_fn_only(tax):
    road = tax.raw_id("road")
    cm = confusion([road, road], [road, tax.raw_id("sky")], tax)
    tp, fp, fn = cm.tp_fp_fn()
    r = validation_id("road") - 1
    assert (tp[r], fp[r], fn[r]) == (1, 0, 1)
    assert fp.sum() == 0


def test_length_mismatch(tax):
    with pytest.raises(ValueError, match="length mismatch"):
        confusion([1, 2], [1], tax)


def test_absent_class_undefined(tax):
    road = tax.raw_id("road")
    rep = iou_report(confusion([road] * 3, [road] * 3, tax))
    assert rep.defined.sum() == 1
    assert dict(rep.rows())["trunk"] is None


def test_mean_iou_published_rows():
    assert mean_iou(SPVCNN) == pytest.approx(63.0, abs=0.05)
    assert mean_iou(SSV3_F) == pytest.approx(44.1, abs=0.05)


def test_mean_iou_constant_and_empty():
    assert mean_iou([0.37] * 5) == pytest.approx(0.37)
    assert mean_iou([0.5, None, float("nan")]) == 0.5
    with pytest.raises(ValueError):
        mean_iou([])


def test_oracle_equivalence():
    rng = np.random.default_rng(7)
    tax, ids = random_taxonomy(rng)
    gt = rng.choice(ids, 100_000)
    pred = np.where(rng.random(100_000) < 0.6, gt, rng.choice(ids, 100_000))
    rep = iou_report(confusion(gt, pred, tax))
    tp, fp, fn = brute_iou(gt, pred, tax._lut, 19)
    assert np.array_equal(rep.tp, tp) and np.array_equal(rep.fp, fp) and np.array_equal(rep.fn, fn)
    denom = tp + fp + fn
    want = np.where(denom > 0, tp / np.maximum(denom, 1), np.nan)
    assert np.array_equal(rep.iou, want, equal_nan=True)


def test_permutation_and_merge(tax):
    rng = np.random.default_rng(3)
    raw = np.array([c.raw_id for c in tax.classes])
    gt, pred = rng.choice(raw, 5000), rng.choice(raw, 5000)
    perm = rng.permutation(5000)
    a = confusion(gt, pred, tax)
    assert np.array_equal(a.counts, confusion(gt[perm], pred[perm], tax).counts)
    b = confusion(gt[:2000], pred[:2000], tax) + confusion(gt[2000:], pred[2000:], tax)
    assert np.array_equal(a.counts, b.counts)


def test_add_requires_same_classes(tax):
    a = ConfusionMatrix.empty(tax)
    with pytest.raises(ValueError):
        a + ConfusionMatrix(np.zeros((2, 3), dtype=np.int64), ("a", "b"))


def test_evaluate_dirs_self(tax, small_dataset):
    root, _ = small_dataset
    rep = iou_report(evaluate_dirs(root, root, tax))
    assert rep.miou == 1.0


def test_evaluate_dirs_predictions(tmp_path, tax, small_dataset):
    root, _ = small_dataset
    road = tax.raw_id("road")
    for seq in ("00", "01"):
        d = tmp_path / "sequences" / seq / "predictions"
        d.mkdir(parents=True)
        for i in range(3):
            n = len(kittiio.read_labels(root / "sequences" / seq / "labels" / f"{i:06d}.label"))
            kittiio.write_labels(np.full(n, road, dtype=np.uint32), d / f"{i:06d}.label")
    rep = iou_report(evaluate_dirs(root, tmp_path, tax))
    r = validation_id("road") - 1
    assert 0 < rep.iou[r] < 1
    assert all(v == 0.0 for i, v in enumerate(rep.iou) if rep.defined[i] and i != r)


def test_evaluate_dirs_missing(tmp_path, tax, small_dataset):
    root, _ = small_dataset
    with pytest.raises(FileNotFoundError):
        evaluate_dirs(root, tmp_path, tax)
