"""Static plot emission: ROC / PR curves and per-frame score timelines."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ScoreTrace, pr_curve, roc_curve


def plot_roc(trace: ScoreTrace, path: str | Path, title: str = "ROC") -> None:
    fpr, tpr = roc_curve(trace)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(fpr, tpr, lw=1.5)
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=1.0)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pr(trace: ScoreTrace, path: str | Path, title: str = "Precision-Recall") -> None:
    recall, precision = pr_curve(trace)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(recall, precision, lw=1.5)
    ax.axhline(trace.prevalence, ls="--", c="gray", lw=1.0, label="no skill")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_score_timeline(trace: ScoreTrace, path: str | Path, title: str = "Frame scores") -> None:
    """Scores over the concatenated frame axis with anomalies shaded."""
    frames = np.arange(len(trace))
    fig, ax = plt.subplots(figsize=(9, 3))
    ax.plot(frames, trace.scores, lw=0.8)
    labels = trace.labels.astype(bool)
    if labels.any():
        ax.fill_between(
            frames, 0, trace.scores.max() * 1.05, where=labels,
            color="red", alpha=0.2, step="mid", label="anomalous",
        )
        ax.legend(loc="upper right")
    for boundary in trace.clip_boundaries[1:]:
        ax.axvline(boundary, c="gray", lw=0.6, ls=":")
    ax.set_xlabel("scored frame")
    ax.set_ylabel("mean window error")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
