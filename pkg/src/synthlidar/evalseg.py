"""Per-class IoU and mIoU of predicted labels against ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kittiio
from .taxonomy import Taxonomy


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns predictions, over validation classes 1..K.

    ``counts`` has K + 1 columns: the last one collects predictions that
    remap to IGNORE. They are errors (false negatives of the gt class) but
    count as a false positive for no class.
    """

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_names != other.class_names:
            raise ValueError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.class_names)

    def tp_fp_fn(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        tp = np.diag(self.counts[:, : self.k]).copy()
        fp = self.counts[:, : self.k].sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        return tp, fp, fn

    @classmethod
    def empty(cls, taxonomy: Taxonomy) -> "ConfusionMatrix":
        k = taxonomy.n_validation
        return cls(np.zeros((k, k + 1), dtype=np.int64), tuple(taxonomy.validation_classes))


@dataclass
class IoUReport:
    class_names: tuple[str, ...]
    iou: np.ndarray  # nan where undefined
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.iou)

    @property
    def miou(self) -> float:
        return mean_iou([v for v in self.iou if not np.isnan(v)])

    def rows(self):
        for name, v in zip(self.class_names, self.iou):
            yield name, (None if np.isnan(v) else float(v))


def confusion(gt, pred, taxonomy: Taxonomy) -> ConfusionMatrix:
    """Accumulate a confusion matrix from raw label streams (ids or label words)."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"length mismatch: {gt.size} gt vs {pred.size} predicted labels")
    k = taxonomy.n_validation
    g = taxonomy.remap_array(gt.ravel())
    p = taxonomy.remap_array(pred.ravel())
    keep = g != taxonomy.ignore_id
    g = g[keep] - 1
    # IGNORE predictions land in the overflow column k
    p = np.where(p[keep] == taxonomy.ignore_id, k, p[keep] - 1)
    counts = np.bincount(g * (k + 1) + p, minlength=k * (k + 1)).reshape(k, k + 1)
    return ConfusionMatrix(counts.astype(np.int64), tuple(taxonomy.validation_classes))


def iou_report(cm: ConfusionMatrix) -> IoUReport:
    tp, fp, fn = cm.tp_fp_fn()
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(denom > 0, tp / np.where(denom > 0, denom, 1), np.nan)
    return IoUReport(cm.class_names, iou, tp, fp, fn)


def mean_iou(per_class: Iterable[float | None]) -> float:
    """Arithmetic mean of the defined values (``None``/nan are skipped)."""
    vals = [float(v) for v in per_class if v is not None and not np.isnan(v)]
    if not vals:
        raise ValueError("mean_iou of an empty set of IoU values")
    return float(np.mean(vals))


def _label_files(folder: Path) -> dict[int, Path]:
    return {int(p.stem): p for p in folder.glob("*.label") if p.stem.isdigit()}


def evaluate_dirs(gt_root, pred_root, taxonomy: Taxonomy,
                  sequences: Sequence[str] | None = None) -> ConfusionMatrix:
    """Confusion over every ground-truth scan that has a matching prediction file.

    Prediction roots may either mirror the dataset layout
    (``sequences/SS/predictions`` or ``.../labels``) or be flat per-sequence
    directories of ``.label`` files.
    """
    gt_root, pred_root = Path(gt_root), Path(pred_root)
    seqs = list(sequences) if sequences is not None else kittiio.list_sequences(gt_root)
    if not seqs:
        raise FileNotFoundError(f"{gt_root}: no sequences found")
    cm = ConfusionMatrix.empty(taxonomy)
    for seq in seqs:
        gdir = kittiio.sequence_dir(gt_root, seq) / "labels"
        pdir = None
        for cand in ("predictions", "labels"):
            d = kittiio.sequence_dir(pred_root, seq) / cand
            if d.is_dir():
                pdir = d
                break
        if pdir is None:
            raise FileNotFoundError(f"sequence {seq}: no prediction directory under {pred_root}")
        gfiles = _label_files(gdir)
        pfiles = _label_files(pdir)
        for idx in sorted(gfiles):
            if idx not in pfiles:
                raise FileNotFoundError(f"sequence {seq} scan {idx:06d}: missing prediction")
            g = kittiio.read_labels(gfiles[idx])
            p = kittiio.read_labels(pfiles[idx])
            if len(g) != len(p):
                raise ValueError(f"sequence {seq} scan {idx:06d}: {len(g)} gt vs {len(p)} predicted labels")
            cm = cm + confusion(g, p, taxonomy)
    return cm
