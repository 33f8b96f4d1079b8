"""Figures written next to delimited reports (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .distribution import EPS, ClassDistribution  # noqa: E402
from .evalseg import IoUReport  # noqa: E402


def figure_path(report_path) -> Path:
    """``stats.csv`` -> ``stats.png`` in the same directory."""
    return Path(report_path).with_suffix(".png")


def plot_distributions(dists: Sequence[ClassDistribution], labels: Sequence[str], path) -> Path:
    """Grouped log-scale bars of per-class proportions."""
    names = dists[0].class_names
    x = np.arange(len(names))
    width = 0.8 / len(dists)
    fig, ax = plt.subplots(figsize=(11, 4.2))
    for i, (d, lab) in enumerate(zip(dists, labels)):
        ax.bar(x + (i - (len(dists) - 1) / 2) * width, np.maximum(d.proportions, EPS), width, label=lab)
    ax.set_yscale("log")
    ax.set_ylim(bottom=EPS * 10)
    ax.set_xticks(x, names, rotation=60, ha="right")
    ax.set_ylabel("proportion of labeled points")
    if len(dists) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_iou(report: IoUReport, path) -> Path:
    names = report.class_names
    vals = np.where(report.defined, report.iou * 100, 0.0)
    fig, ax = plt.subplots(figsize=(11, 4.2))
    bars = ax.bar(np.arange(len(names)), vals, color=["C0" if d else "0.8" for d in report.defined])
    for b, d in zip(bars, report.defined):
        if not d:
            ax.text(b.get_x() + b.get_width() / 2, 1, "n/a", ha="center", va="bottom", fontsize=7)
    ax.axhline(report.miou * 100, color="C3", ls="--", lw=1, label=f"mIoU {report.miou * 100:.1f}")
    ax.set_xticks(np.arange(len(names)), names, rotation=60, ha="right")
    ax.set_ylim(0, 100)
    ax.set_ylabel("IoU (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_divergence(names: Sequence[str], per_class: np.ndarray, path) -> Path:
    fig, ax = plt.subplots(figsize=(11, 4.2))
    ax.bar(np.arange(len(names)), per_class)
    ax.set_xticks(np.arange(len(names)), names, rotation=60, ha="right")
    ax.set_ylabel("|log10 difference| (decades)")
    ax.set_title(f"total {float(np.sum(per_class)):.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
