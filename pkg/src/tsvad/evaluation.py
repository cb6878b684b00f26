"""Per-frame anomaly scoring and thresholdless ranking metrics.

A trained model scores each test clip window by window; per-output-frame
squared errors are averaged across overlapping windows into one score per
frame (:func:`score_clip`), and all clips' scored frames are concatenated
into a :class:`ScoreTrace`.  ROC AUC uses the rank-statistic formulation
with half credit for ties; PR AUC is average precision with step
integration and no interpolation.  Scores are raw averaged errors; no
per-video normalization is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .data import VideoClip
from .errors import ConfigError, DataError, UndefinedMetricError
from .windowing import FrameScoreAccumulator, WindowSpec, enumerate_pairs

logger = logging.getLogger(__name__)

SCORE_GRANULARITIES = ("frame", "window")


@dataclass(frozen=True)
class ScoreTrace:
    """Concatenated per-frame scores and labels across all scored test clips."""

    scores: np.ndarray  # (N,) float64, finite
    labels: np.ndarray  # (N,) bool
    clip_boundaries: tuple[int, ...] = ()  # start offset of each clip's segment
    coverage: np.ndarray | None = None  # (N,) windows contributing per frame

    def __post_init__(self) -> None:
        if self.scores.ndim != 1 or self.labels.shape != self.scores.shape:
            raise DataError("scores and labels must be aligned 1-D arrays")
        if not np.isfinite(self.scores).all():
            raise DataError("scores must be finite")
        if self.coverage is not None and self.coverage.shape != self.scores.shape:
            raise DataError("coverage misaligned with scores")

    def __len__(self) -> int:
        return int(self.scores.size)

    @property
    def n_anomalous(self) -> int:
        return int(self.labels.sum())

    @property
    def prevalence(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0


def _positions_for_mode(pair_positions: tuple[tuple[int, ...], tuple[int, ...]], mode: str):
    recon, pred = pair_positions
    if mode == "full":
        return None
    if mode == "recon-only":
        return recon
    if mode == "pred-only":
        if not pred:
            raise ConfigError("pred-only scoring is undefined for shift=0")
        return pred
    raise ConfigError(f"unknown scoring mode {mode!r}")


def _frame_errors(output: torch.Tensor, target: torch.Tensor) -> np.ndarray:
    # (B, 1, W, H, Wpx) -> (B, W): mean squared error per output frame.
    err = ((output - target) ** 2).mean(dim=(-2, -1))
    return err.reshape(err.shape[0], -1, err.shape[-1]).mean(dim=1).double().numpy()


def _windows_tensor(frames: np.ndarray, index_lists: Sequence[Sequence[int]]) -> torch.Tensor:
    stacked = np.stack([frames[np.asarray(ix, dtype=int)] for ix in index_lists])
    return torch.from_numpy(stacked).float().unsqueeze(1)  # (B, 1, W, H, Wpx)


def score_clip(
    model: Callable[[torch.Tensor], torch.Tensor],
    clip: VideoClip,
    spec: WindowSpec,
    mode: str = "full",
    granularity: str = "frame",
    batch_size: int = 32,
) -> FrameScoreAccumulator:
    """Score one clip: run every shifted window and average frame errors.

    ``mode`` restricts which output positions contribute (full, recon-only,
    pred-only); ``granularity`` chooses between per-frame errors and the
    whole-window mean assigned to every contributing frame.
    """
    if granularity not in SCORE_GRANULARITIES:
        raise ConfigError(f"unknown granularity {granularity!r}")
    pairs = enumerate_pairs(clip.n_frames, spec)
    if not pairs:
        raise DataError(
            f"clip {clip.clip_id} has {clip.n_frames} frames; "
            f"need at least {spec.total_len}"
        )
    positions = _positions_for_mode((pairs[0].recon_positions, pairs[0].pred_positions), mode)

    acc = FrameScoreAccumulator(clip.n_frames)
    with torch.no_grad():
        for i in range(0, len(pairs), batch_size):
            batch = pairs[i : i + batch_size]
            inputs = _windows_tensor(clip.frames, [p.input_indices for p in batch])
            targets = _windows_tensor(clip.frames, [p.target_indices for p in batch])
            outputs = model(inputs)
            errors = _frame_errors(outputs, targets)
            for pair, err in zip(batch, errors):
                if granularity == "window":
                    contributing = positions if positions is not None else range(len(err))
                    err = np.full_like(err, err[list(contributing)].mean())
                acc.add(pair, err, positions=positions)
    return acc


def score_clip_pair(
    model: Callable[[torch.Tensor, torch.Tensor], tuple[torch.Tensor, torch.Tensor]],
    clip_a: VideoClip,
    clip_b: VideoClip,
    spec: WindowSpec,
    mode: str = "full",
    granularity: str = "frame",
    batch_size: int = 32,
) -> FrameScoreAccumulator:
    """Score an aligned modality pair; frame error is the two-stream mean."""
    if granularity not in SCORE_GRANULARITIES:
        raise ConfigError(f"unknown granularity {granularity!r}")
    if clip_a.n_frames != clip_b.n_frames:
        raise DataError(
            f"modality misalignment for clip {clip_a.clip_id}: "
            f"{clip_a.n_frames} vs {clip_b.n_frames} frames"
        )
    pairs = enumerate_pairs(clip_a.n_frames, spec)
    if not pairs:
        raise DataError(
            f"clip {clip_a.clip_id} has {clip_a.n_frames} frames; "
            f"need at least {spec.total_len}"
        )
    positions = _positions_for_mode((pairs[0].recon_positions, pairs[0].pred_positions), mode)

    acc = FrameScoreAccumulator(clip_a.n_frames)
    with torch.no_grad():
        for i in range(0, len(pairs), batch_size):
            batch = pairs[i : i + batch_size]
            in_a = _windows_tensor(clip_a.frames, [p.input_indices for p in batch])
            in_b = _windows_tensor(clip_b.frames, [p.input_indices for p in batch])
            tgt_a = _windows_tensor(clip_a.frames, [p.target_indices for p in batch])
            tgt_b = _windows_tensor(clip_b.frames, [p.target_indices for p in batch])
            out_a, out_b = model(in_a, in_b)
            errors = 0.5 * (_frame_errors(out_a, tgt_a) + _frame_errors(out_b, tgt_b))
            for pair, err in zip(batch, errors):
                if granularity == "window":
                    contributing = positions if positions is not None else range(len(err))
                    err = np.full_like(err, err[list(contributing)].mean())
                acc.add(pair, err, positions=positions)
    return acc


def build_trace(
    scored: Sequence[tuple[VideoClip, FrameScoreAccumulator]],
) -> ScoreTrace:
    """Concatenate scored frames across clips, dropping uncovered frames."""
    scores, labels, coverage, boundaries = [], [], [], []
    offset = 0
    for clip, acc in scored:
        if clip.labels is None:
            raise DataError(f"clip {clip.clip_id} has no labels; cannot evaluate")
        mask = acc.scored_mask
        boundaries.append(offset)
        scores.append(acc.scores()[mask])
        labels.append(clip.labels[mask])
        coverage.append(acc.count[mask])
        offset += int(mask.sum())
    if not scores:
        raise DataError("no scored clips")
    return ScoreTrace(
        scores=np.concatenate(scores),
        labels=np.concatenate(labels),
        clip_boundaries=tuple(boundaries),
        coverage=np.concatenate(coverage),
    )


def score_split(
    model,
    clips: Sequence[VideoClip],
    spec: WindowSpec,
    mode: str = "full",
    granularity: str = "frame",
    batch_size: int = 32,
) -> tuple[ScoreTrace, list[str]]:
    """Score every clip long enough for one window; report skipped clip ids."""
    scored = []
    skipped = []
    for clip in clips:
        if clip.n_frames < spec.total_len:
            logger.warning(
                "skipping clip %s: %d frames < window length %d",
                clip.clip_id, clip.n_frames, spec.total_len,
            )
            skipped.append(clip.clip_id)
            continue
        scored.append((clip, score_clip(model, clip, spec, mode, granularity, batch_size)))
    if not scored:
        raise DataError("every test clip was shorter than one window")
    return build_trace(scored), skipped


def score_split_pairs(
    model,
    clip_pairs: Sequence[tuple[VideoClip, VideoClip]],
    spec: WindowSpec,
    mode: str = "full",
    granularity: str = "frame",
    batch_size: int = 32,
) -> tuple[ScoreTrace, list[str]]:
    """Two-modality variant of :func:`score_split`."""
    scored = []
    skipped = []
    for clip_a, clip_b in clip_pairs:
        if clip_a.n_frames < spec.total_len:
            logger.warning(
                "skipping clip %s: %d frames < window length %d",
                clip_a.clip_id, clip_a.n_frames, spec.total_len,
            )
            skipped.append(clip_a.clip_id)
            continue
        acc = score_clip_pair(model, clip_a, clip_b, spec, mode, granularity, batch_size)
        scored.append((clip_a, acc))
    if not scored:
        raise DataError("every test clip was shorter than one window")
    return build_trace(scored), skipped


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's mean rank."""
    order = np.argsort(values, kind="mergesort")
    ordered = values[order]
    boundary = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1], True])
    starts, ends = boundary[:-1], boundary[1:]
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def roc_auc(trace: ScoreTrace) -> float:
    """Probability a random anomalous frame outscores a random normal one.

    Ties count half, via the rank-statistic identity.
    """
    labels = trace.labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC AUC needs both classes; got {n_pos} positives, {n_neg} negatives"
        )
    ranks = _average_ranks(trace.scores)
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(trace: ScoreTrace) -> float:
    """Average precision: sum of recall increments times prefix precision.

    Frames with equal scores enter the ranking together (threshold
    semantics); no interpolation between points.
    """
    labels = trace.labels.astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR AUC needs at least one positive label")
    order = np.argsort(-trace.scores, kind="mergesort")
    scores = trace.scores[order]
    hits = labels[order].astype(np.int64)

    # Evaluate at the end of every tie group (all equal scores together).
    group_end = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(hits)[group_end]
    total = group_end + 1
    precision = tp / total
    recall = tp / n_pos
    recall_prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - recall_prev) * precision))


def no_skill(trace: ScoreTrace) -> tuple[float, float]:
    """Chance-level baselines: 0.5 for ROC AUC, prevalence for PR AUC."""
    return 0.5, trace.prevalence


def roc_curve(trace: ScoreTrace) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) points over every distinct score threshold, for plotting."""
    order = np.argsort(-trace.scores, kind="mergesort")
    scores = trace.scores[order]
    hits = trace.labels[order].astype(np.int64)
    group_end = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(hits)[group_end]
    fp = (group_end + 1) - tp
    n_pos = int(trace.labels.sum())
    n_neg = int(trace.labels.size) - n_pos
    tpr = np.r_[0.0, tp / max(n_pos, 1)]
    fpr = np.r_[0.0, fp / max(n_neg, 1)]
    return fpr, tpr


def pr_curve(trace: ScoreTrace) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) points over every distinct score threshold."""
    order = np.argsort(-trace.scores, kind="mergesort")
    scores = trace.scores[order]
    hits = trace.labels[order].astype(np.int64)
    group_end = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(hits)[group_end]
    total = group_end + 1
    n_pos = int(trace.labels.sum())
    recall = tp / max(n_pos, 1)
    precision = tp / total
    return recall, precision
