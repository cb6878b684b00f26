"""Shifted-window training loss with a reconstruction/prediction split.

The loss is the mean squared error between the model's ``input_len`` output
frames and the target segment shifted by ``shift`` frames.  It decomposes
into a reconstruction term (positions whose target frame was part of the
input) and a prediction term (positions beyond the input), weighted by
position counts unless custom weights are supplied.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .errors import ConfigError, DataError
from .windowing import WindowSpec, classify_positions

LOSS_MODES = ("full", "recon-only", "pred-only")


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss plus its reconstruction/prediction components.

    ``total = recon_weight * recon_component + pred_weight * pred_component``
    holds by construction; with default weights that equals the plain mean
    squared error over all output positions.
    """

    total: Tensor
    recon_component: Tensor
    pred_component: Tensor
    recon_weight: float
    pred_weight: float


def _frame_axis_check(output: Tensor, target: Tensor, spec: WindowSpec) -> None:
    if output.shape != target.shape:
        raise DataError(
            f"output shape {tuple(output.shape)} != target shape {tuple(target.shape)}"
        )
    if output.dim() < 3:
        raise DataError(
            f"expected at least 3 dims (frames, height, width), got {output.dim()}"
        )
    if output.shape[-3] != spec.input_len:
        raise DataError(
            f"frame axis has {output.shape[-3]} frames, expected {spec.input_len}"
        )


def temporal_shift_loss(
    output: Tensor,
    target: Tensor,
    spec: WindowSpec,
    weights: tuple[float, float] | None = None,
) -> LossBreakdown:
    """Mean squared error against the shifted target, split by position class.

    ``output`` and ``target`` are ``(..., input_len, H, W)`` volumes in
    [0, 1]; the frame axis is the third from the end so both unbatched
    volumes and batched ``(B, C, T, H, W)`` tensors work.  ``weights``
    overrides the default position-proportional pair
    ``((input_len - shift) / input_len, shift / input_len)``.
    The result is differentiable with respect to ``output``.
    """
    _frame_axis_check(output, target, spec)
    recon_pos, pred_pos = classify_positions(spec)
    sq = (output - target) ** 2

    if recon_pos:
        recon = sq.index_select(-3, torch.tensor(recon_pos, device=sq.device)).mean()
    else:
        recon = sq.new_zeros(())
    if pred_pos:
        pred = sq.index_select(-3, torch.tensor(pred_pos, device=sq.device)).mean()
    else:
        pred = sq.new_zeros(())

    if weights is None:
        w = spec.input_len
        weights = ((w - spec.shift) / w, spec.shift / w)
    w_recon, w_pred = weights
    total = w_recon * recon + w_pred * pred
    return LossBreakdown(
        total=total,
        recon_component=recon,
        pred_component=pred,
        recon_weight=w_recon,
        pred_weight=w_pred,
    )


def masked_loss(output: Tensor, target: Tensor, spec: WindowSpec, mode: str) -> Tensor:
    """Scalar loss restricted to one position class.

    ``full`` equals :func:`temporal_shift_loss` total with default weights;
    ``recon-only`` / ``pred-only`` average only that class's positions.
    """
    if mode not in LOSS_MODES:
        raise ConfigError(f"unknown loss mode {mode!r}, expected one of {LOSS_MODES}")
    if mode == "pred-only" and spec.shift == 0:
        raise ConfigError("pred-only loss is undefined for shift=0 (no predicted positions)")
    breakdown = temporal_shift_loss(output, target, spec)
    if mode == "full":
        return breakdown.total
    if mode == "recon-only":
        return breakdown.recon_component
    return breakdown.pred_component
