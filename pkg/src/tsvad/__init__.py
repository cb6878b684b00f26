"""Shifted-window autoencoder toolkit for video anomaly detection."""

from .data import DatasetSplit, VideoClip, generate_synthetic, load_directory
from .errors import ConfigError, DataError, TrainingError, UndefinedMetricError
from .evaluation import ScoreTrace, pr_auc, roc_auc, score_clip, score_split
from .losses import LossBreakdown, masked_loss, temporal_shift_loss
from .models import ModelSpec, build_model, fuse
from .windowing import ShiftedPair, WindowSpec, aggregate_frame_scores, enumerate_pairs

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetSplit",
    "LossBreakdown",
    "ModelSpec",
    "ScoreTrace",
    "ShiftedPair",
    "TrainingError",
    "UndefinedMetricError",
    "VideoClip",
    "WindowSpec",
    "aggregate_frame_scores",
    "build_model",
    "enumerate_pairs",
    "fuse",
    "generate_synthetic",
    "load_directory",
    "masked_loss",
    "pr_auc",
    "roc_auc",
    "score_clip",
    "score_split",
    "temporal_shift_loss",
]
