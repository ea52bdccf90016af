"""Static figure rendering: distance heatmaps for analysis reports, loss
traces and accuracy histograms for benchmark runs. All output goes to image
files; nothing opens a window."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analyzer import AnalysisReport
from .episodes import RunResult

_DPI = 150


def render_distance_heatmaps(report: AnalysisReport, path: str | Path) -> Path:
    """Side-by-side heatmaps of the inter-class text and image prototype
    distance matrices."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrices = [
        (np.asarray(report.text_distance_matrix), f"text (m_T = {report.m_t:.3f})"),
        (np.asarray(report.image_distance_matrix), f"image (m_V = {report.m_v:.3f})"),
    ]
    vmax = max(float(m.max()) for m, _ in matrices) or 1.0
    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    for ax, (matrix, title) in zip(axes, matrices):
        im = ax.imshow(matrix, vmin=0.0, vmax=vmax, cmap="viridis")
        ax.set_title(title)
        ticks = range(report.class_count)
        ax.set_xticks(ticks, report.class_names, rotation=45, ha="right", fontsize=7)
        ax.set_yticks(ticks, report.class_names, fontsize=7)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(f"pairwise class distances (diff = {report.diff:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_loss_traces(result: RunResult, path: str | Path,
                       max_episodes: int = 20) -> Path:
    """Per-epoch total-loss curves for the first max_episodes episodes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    shown = 0
    for record in result.records:
        if record.failed or not record.loss_trace:
            continue
        ax.plot(record.loss_trace, linewidth=0.8, alpha=0.7,
                label=f"episode {record.index}" if shown < 8 else None)
        shown += 1
        if shown >= max_episodes:
            break
    ax.set_xlabel("epoch")
    ax.set_ylabel("total loss")
    ax.set_title(f"training loss ({shown} episodes shown)")
    if shown and shown <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_accuracy_histogram(result: RunResult, path: str | Path) -> Path:
    """Histogram of per-episode accuracies with the mean marked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    accs = np.asarray(result.episode_accuracies, dtype=np.float64)
    ax.hist(accs, bins=min(20, max(5, accs.size // 5)), edgecolor="black")
    ax.axvline(result.mean_accuracy, color="crimson", linestyle="--",
               label=f"mean {result.mean_accuracy:.4f} +/- {result.ci95:.4f}")
    ax.set_xlabel("episode accuracy")
    ax.set_ylabel("episodes")
    ax.set_title(f"accuracy over {accs.size} episodes")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
