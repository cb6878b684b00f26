"""Training loop, train-split audit, and checkpoint persistence.

Models train only on the train split; a :class:`TrainingAudit` records every
clip id a batch touches and hard-fails on anything outside the allowed set.
Optimization is Adam over shuffled shifted-window batches, deterministic
given the seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .data import VideoClip
from .errors import ConfigError, TrainingError
from .losses import masked_loss, temporal_shift_loss
from .models import ModelSpec, build_model
from .windowing import WindowSpec, enumerate_pairs

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tsvad-checkpoint-v1"


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    window_subsample: int = 1  # train on every k-th window; scoring is unaffected

    def __post_init__(self) -> None:
        problems = []
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if self.window_subsample < 1:
            problems.append(f"window_subsample must be >= 1, got {self.window_subsample}")
        if problems:
            raise ConfigError("; ".join(problems))


class TrainingAudit:
    """Records clip ids consumed during training; rejects foreign clips."""

    def __init__(self, allowed_clip_ids: Sequence[str]) -> None:
        self.allowed = frozenset(allowed_clip_ids)
        self.touched: set[str] = set()

    def record(self, clip_id: str) -> None:
        if clip_id not in self.allowed:
            raise TrainingError(
                f"clip {clip_id!r} is not in the training split; refusing to train on it"
            )
        self.touched.add(clip_id)


@dataclass
class TrainingLog:
    epoch_losses: list[float]
    steps: int
    touched_clip_ids: tuple[str, ...]


def _window_index(
    clips: Sequence[VideoClip], spec: WindowSpec, subsample: int
) -> list[tuple[int, tuple[int, ...], tuple[int, ...]]]:
    """(clip index, input indices, target indices) for every training window."""
    index = []
    for ci, clip in enumerate(clips):
        pairs = enumerate_pairs(clip.n_frames, spec)
        if not pairs:
            logger.warning(
                "train clip %s too short for one window (%d < %d); skipping",
                clip.clip_id, clip.n_frames, spec.total_len,
            )
        for pair in pairs[::subsample]:
            index.append((ci, pair.input_indices, pair.target_indices))
    return index


def _gather(clips: Sequence[VideoClip], entries, which: int) -> torch.Tensor:
    """Stack one side of the window pairs: which=0 inputs, which=1 targets."""
    arrays = [clips[e[0]].frames[np.asarray(e[1 + which], dtype=int)] for e in entries]
    return torch.from_numpy(np.stack(arrays)).float().unsqueeze(1)


def train_model(
    model: nn.Module,
    clips: Sequence[VideoClip],
    window_spec: WindowSpec,
    settings: TrainSettings,
    loss_mode: str = "full",
    loss_weights: tuple[float, float] | None = None,
    audit: TrainingAudit | None = None,
    paired_clips: Sequence[VideoClip] | None = None,
) -> TrainingLog:
    """Train in place on shifted-window batches drawn from ``clips``.

    For multimodal models pass ``paired_clips`` aligned 1:1 with ``clips``;
    the loss is the unweighted sum of the two modalities' losses.
    Raises :class:`TrainingError` on non-finite loss.
    """
    if paired_clips is not None and len(paired_clips) != len(clips):
        raise ConfigError("paired_clips must align 1:1 with clips")
    if loss_weights is not None and loss_mode != "full":
        raise ConfigError("custom loss weights only apply to the full loss mode")
    if audit is None:
        audit = TrainingAudit([c.clip_id for c in clips])

    def batch_loss(outputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        if loss_weights is not None:
            return temporal_shift_loss(outputs, targets, window_spec, weights=loss_weights).total
        return masked_loss(outputs, targets, window_spec, loss_mode)

    index = _window_index(clips, window_spec, settings.window_subsample)
    if not index:
        raise ConfigError(
            f"no training windows: every clip is shorter than {window_spec.total_len} frames"
        )

    torch.manual_seed(settings.seed)
    rng = np.random.default_rng(settings.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)

    model.train()
    epoch_losses = []
    steps = 0
    order = np.arange(len(index))
    for epoch in range(settings.epochs):
        rng.shuffle(order)
        epoch_total = 0.0
        n_batches = 0
        for start in range(0, len(order), settings.batch_size):
            entries = [index[i] for i in order[start : start + settings.batch_size]]
            for ci, _, _ in entries:
                audit.record(clips[ci].clip_id)

            inputs = _gather(clips, entries, 0)
            targets = _gather(clips, entries, 1)
            if paired_clips is None:
                loss = batch_loss(model(inputs), targets)
            else:
                inputs_b = _gather(paired_clips, entries, 0)
                targets_b = _gather(paired_clips, entries, 1)
                out_a, out_b = model(inputs, inputs_b)
                loss = batch_loss(out_a, targets) + batch_loss(out_b, targets_b)

            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss.item()!r} at epoch {epoch + 1}, step {steps}; "
                    "try a lower learning rate"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_total += float(loss.item())
            n_batches += 1
            steps += 1
        epoch_losses.append(epoch_total / n_batches)
        logger.info("epoch %d/%d: mean loss %.6f", epoch + 1, settings.epochs, epoch_losses[-1])

    model.eval()
    return TrainingLog(
        epoch_losses=epoch_losses,
        steps=steps,
        touched_clip_ids=tuple(sorted(audit.touched)),
    )


def train_step(
    model: nn.Module,
    optimizer: torch.optim.Optimizer,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    spec: WindowSpec,
    mode: str = "full",
) -> float:
    """One optimization step on a prepared batch; returns the loss value."""
    model.train()
    loss = masked_loss(model(inputs), targets, spec, mode)
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss.item()!r}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.item())


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    model: nn.Module,
    model_spec: ModelSpec,
    window_spec: WindowSpec,
    seed: int,
    config_hash: str,
) -> Path:
    """Self-describing checkpoint: spec text, parameters, seed, config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "model_spec_text": model_spec.to_kv_text(),
            "window_spec": {
                "input_len": window_spec.input_len,
                "shift": window_spec.shift,
                "stride": window_spec.stride,
            },
            "state_dict": model.state_dict(),
            "seed": int(seed),
            "config_hash": config_hash,
        },
        path,
    )
    return path


def load_checkpoint(
    path: str | Path,
    expected_spec: ModelSpec | None = None,
) -> tuple[nn.Module, ModelSpec, WindowSpec, dict]:
    """Rebuild the model from a checkpoint, failing loudly on spec mismatch."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"not a recognized checkpoint: {path}")
    spec = ModelSpec.from_kv_text(payload["model_spec_text"])
    if expected_spec is not None and expected_spec != spec:
        raise ConfigError(
            "checkpoint model spec mismatch:\n"
            f"  stored:   {spec}\n  expected: {expected_spec}"
        )
    window_spec = WindowSpec(**payload["window_spec"])
    model = build_model(spec)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {"seed": payload["seed"], "config_hash": payload["config_hash"]}
    return model, spec, window_spec, meta
