"""Sliding-window geometry for shifted-target training and scoring.

Each window spans ``total_len = input_len + shift`` consecutive frames and
is split into two overlapping segments: the input segment ``[t, t+input_len)``
and the target segment ``[t+shift, t+shift+input_len)``.  Target positions
whose frame also belongs to the input segment are *reconstructed*; the
trailing ``shift`` positions are *predicted*.  Because windows overlap, a
frame usually receives error contributions from several windows; those are
averaged into a per-frame anomaly score by :func:`aggregate_frame_scores`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class WindowSpec:
    """Geometry of the shifted sliding window.

    ``input_len`` frames are fed to the model; the target segment is the
    same length but offset by ``shift`` frames, so ``shift`` of the output
    positions have no matching input frame and must be predicted.
    ``stride`` is the step between consecutive window starts.
    """

    input_len: int
    shift: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.input_len <= 0:
            raise ConfigError(f"input_len must be positive, got {self.input_len}")
        if not 0 <= self.shift <= self.input_len:
            raise ConfigError(
                f"shift must satisfy 0 <= shift <= input_len, "
                f"got shift={self.shift}, input_len={self.input_len}"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")

    @property
    def total_len(self) -> int:
        """Number of distinct frames one window touches."""
        return self.input_len + self.shift


@dataclass(frozen=True)
class ShiftedPair:
    """One training/scoring unit: input frame indices and shifted targets."""

    input_indices: tuple[int, ...]
    target_indices: tuple[int, ...]
    recon_positions: tuple[int, ...]
    pred_positions: tuple[int, ...]

    @property
    def start(self) -> int:
        return self.input_indices[0]


def classify_positions(spec: WindowSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Partition output positions into reconstructed and predicted.

    Position ``p`` targets frame ``t + shift + p``; it was part of the input
    iff ``shift + p < input_len``, so the first ``input_len - shift``
    positions are reconstructed and the last ``shift`` are predicted.
    """
    w, s = spec.input_len, spec.shift
    recon = tuple(range(w - s))
    pred = tuple(range(w - s, w))
    return recon, pred


def enumerate_pairs(clip_len: int, spec: WindowSpec) -> list[ShiftedPair]:
    """List every shifted window pair that fits in a clip of ``clip_len`` frames.

    Pairs are returned in ascending start order, stepping by ``spec.stride``.
    A clip shorter than ``spec.total_len`` yields no pairs.
    """
    if clip_len < 1:
        raise DataError(f"clip_len must be >= 1, got {clip_len}")
    recon, pred = classify_positions(spec)
    w, length = spec.input_len, spec.total_len
    pairs = []
    for t in range(0, clip_len - length + 1, spec.stride):
        pairs.append(
            ShiftedPair(
                input_indices=tuple(range(t, t + w)),
                target_indices=tuple(range(t + spec.shift, t + spec.shift + w)),
                recon_positions=recon,
                pred_positions=pred,
            )
        )
    return pairs


class FrameScoreAccumulator:
    """Running per-frame sums of window error contributions.

    ``count[f]`` is the number of windows that contributed to frame ``f``;
    frames with ``count == 0`` (the first ``shift`` frames of a clip, plus
    tail frames the stride never covers) are flagged out of ``scored_mask``
    and carry no score.
    """

    def __init__(self, clip_len: int) -> None:
        if clip_len < 1:
            raise DataError(f"clip_len must be >= 1, got {clip_len}")
        self.clip_len = clip_len
        self.sum_error = np.zeros(clip_len, dtype=np.float64)
        self.count = np.zeros(clip_len, dtype=np.int64)

    def add(
        self,
        pair: ShiftedPair,
        frame_errors: Sequence[float],
        positions: Sequence[int] | None = None,
    ) -> None:
        """Add one window's per-output-frame errors.

        ``positions`` restricts which output positions contribute (used for
        prediction-only scoring); default is all of them.
        """
        errors = np.asarray(frame_errors, dtype=np.float64)
        if errors.shape != (len(pair.target_indices),):
            raise DataError(
                f"frame error vector has shape {errors.shape}, "
                f"expected ({len(pair.target_indices)},)"
            )
        if positions is None:
            positions = range(len(pair.target_indices))
        for p in positions:
            frame = pair.target_indices[p]
            if frame >= self.clip_len:
                raise DataError(
                    f"target frame {frame} out of range for clip of length {self.clip_len}"
                )
            self.sum_error[frame] += errors[p]
            self.count[frame] += 1

    @property
    def scored_mask(self) -> np.ndarray:
        return self.count > 0

    def scores(self) -> np.ndarray:
        """Mean error per frame; unscored frames hold 0 and are masked out."""
        out = np.zeros(self.clip_len, dtype=np.float64)
        mask = self.scored_mask
        out[mask] = self.sum_error[mask] / self.count[mask]
        return out


def aggregate_frame_scores(
    per_pair_frame_errors: Iterable[tuple[ShiftedPair, Sequence[float]]],
    clip_len: int,
    positions: Sequence[int] | None = None,
) -> FrameScoreAccumulator:
    """Average window errors into per-frame scores.

    Every entry pairs a window with its per-output-frame error vector; a
    frame's score is the mean over all windows whose targets contain it.
    """
    acc = FrameScoreAccumulator(clip_len)
    for pair, errors in per_pair_frame_errors:
        acc.add(pair, errors, positions=positions)
    return acc
