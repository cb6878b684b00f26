"""Config-driven experiment runner wiring data, models, losses, and scoring.

A run trains one model on the train split only, scores the test split, and
persists a checkpoint, metric report, per-frame scores, plots, and the
resolved config.  Grid operations (window sweep, loss comparison, fusion
comparison) reuse one dataset and the same seeds across their runs so rows
are comparable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import data as data_mod
from .data import DatasetSplit, VideoClip, dataset_hash, generate_synthetic, load_directory
from .errors import ConfigError, DataError
from .evaluation import (
    ScoreTrace,
    no_skill,
    pr_auc,
    roc_auc,
    score_split,
    score_split_pairs,
)
from .models import FUSION_MODES, MODEL_FAMILIES, ModelSpec, build_model
from .report import MetricRow, Report
from .training import (
    TrainingAudit,
    TrainingLog,
    TrainSettings,
    load_checkpoint,
    save_checkpoint,
    train_model,
)
from .windowing import WindowSpec

logger = logging.getLogger(__name__)

DEFAULT_SWEEP_PAIRS = ((8, 0), (6, 2), (4, 4), (4, 1))
LOSS_MODES = ("full", "recon-only", "pred-only")
REPORT_FORMATS = ("json", "csv", "txt")


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSection:
    source: str = "synthetic"  # synthetic | manifest
    seed: int = 7
    n_train_clips: int = 8
    n_test_clips: int = 4
    clip_len: int = 192
    anomaly_rate: float = 0.06
    modalities: tuple[str, ...] = ("intensity",)
    manifest: str | None = None


@dataclass(frozen=True)
class WindowSection:
    input_len: int = 6
    shift: int = 2
    stride: int = 1


@dataclass(frozen=True)
class ModelSection:
    family: str = "3dcae"
    frame_size: tuple[int, int] = (64, 64)
    channel_widths: tuple[int, ...] = (16, 32, 64)
    fusion: str = "add"
    seed: int = 0


@dataclass(frozen=True)
class TrainingSection:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    window_subsample: int = 1


@dataclass(frozen=True)
class LossSection:
    mode: str = "full"
    recon_weight: float | None = None
    pred_weight: float | None = None
    score_granularity: str = "frame"  # frame | window


@dataclass(frozen=True)
class OutputSection:
    dir: str = "runs"
    formats: tuple[str, ...] = ("json", "csv", "txt")
    plots: bool = True
    dump_scores: bool = True


_SECTIONS = {
    "dataset": DatasetSection,
    "window": WindowSection,
    "model": ModelSection,
    "training": TrainingSection,
    "loss": LossSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    window: WindowSection = field(default_factory=WindowSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    loss: LossSection = field(default_factory=LossSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> list[str]:
        """Every violated field, not just the first."""
        p: list[str] = []
        d, w, m, t, l, o = self.dataset, self.window, self.model, self.training, self.loss, self.output

        if d.source not in ("synthetic", "manifest"):
            p.append(f"dataset.source: unknown source {d.source!r}")
        if not d.modalities:
            p.append("dataset.modalities: at least one modality required")
        if d.source == "synthetic":
            if d.n_train_clips < 1 or d.n_test_clips < 1:
                p.append("dataset.n_train_clips/n_test_clips: must be >= 1")
            if d.clip_len < 32:
                p.append(f"dataset.clip_len: must be >= 32, got {d.clip_len}")
            if not 0.0 < d.anomaly_rate <= 0.5:
                p.append(f"dataset.anomaly_rate: must be in (0, 0.5], got {d.anomaly_rate}")
            for modality in d.modalities:
                if modality not in data_mod.SYNTHETIC_MODALITIES:
                    p.append(f"dataset.modalities: unknown synthetic modality {modality!r}")
            if tuple(m.frame_size) != data_mod.FRAME_SIZE:
                p.append(
                    f"model.frame_size: synthetic data is {data_mod.FRAME_SIZE}, got {m.frame_size}"
                )
        else:
            if not d.manifest:
                p.append("dataset.manifest: required when source is 'manifest'")

        if w.input_len <= 0:
            p.append(f"window.input_len: must be positive, got {w.input_len}")
        if w.shift < 0 or w.shift > max(w.input_len, 0):
            p.append(
                f"window.shift: must satisfy 0 <= shift <= input_len, "
                f"got shift={w.shift}, input_len={w.input_len}"
            )
        if w.stride < 1:
            p.append(f"window.stride: must be >= 1, got {w.stride}")
        if d.source == "synthetic" and w.input_len + w.shift > d.clip_len:
            p.append(
                f"window: total length {w.input_len + w.shift} exceeds clip_len {d.clip_len}"
            )

        if m.family not in MODEL_FAMILIES:
            p.append(f"model.family: unknown family {m.family!r}")
        if m.fusion not in FUSION_MODES:
            p.append(f"model.fusion: unknown fusion {m.fusion!r}")
        if not m.channel_widths or any(c < 1 for c in m.channel_widths):
            p.append(f"model.channel_widths: must be positive, got {m.channel_widths}")
        else:
            factor = 2 ** len(m.channel_widths)
            if any(dim % factor != 0 for dim in m.frame_size):
                p.append(
                    f"model.frame_size: {m.frame_size} not divisible by 2^{len(m.channel_widths)}"
                )
        if m.family == "multimodal" and len(d.modalities) != 2:
            p.append("dataset.modalities: multimodal models need exactly two modalities")

        if t.epochs < 1:
            p.append(f"training.epochs: must be >= 1, got {t.epochs}")
        if t.batch_size < 1:
            p.append(f"training.batch_size: must be >= 1, got {t.batch_size}")
        if t.learning_rate <= 0:
            p.append(f"training.learning_rate: must be positive, got {t.learning_rate}")
        if t.window_subsample < 1:
            p.append(f"training.window_subsample: must be >= 1, got {t.window_subsample}")

        if l.mode not in LOSS_MODES:
            p.append(f"loss.mode: unknown mode {l.mode!r}")
        if l.mode == "pred-only" and w.shift == 0:
            p.append("loss.mode: pred-only is undefined when window.shift is 0")
        if (l.recon_weight is None) != (l.pred_weight is None):
            p.append("loss: recon_weight and pred_weight must be set together")
        if l.recon_weight is not None and l.mode != "full":
            p.append("loss: custom weights only apply to mode 'full'")
        if l.score_granularity not in ("frame", "window"):
            p.append(f"loss.score_granularity: unknown value {l.score_granularity!r}")

        unknown_formats = set(o.formats) - set(REPORT_FORMATS)
        if unknown_formats:
            p.append(f"output.formats: unknown formats {sorted(unknown_formats)}")
        return p

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window.input_len, self.window.shift, self.window.stride)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            family=self.model.family,
            input_frames=self.window.input_len,
            frame_size=tuple(self.model.frame_size),
            channel_widths=tuple(self.model.channel_widths),
            fusion=self.model.fusion,
            seed=self.model.seed,
        )

    def loss_weights(self) -> tuple[float, float] | None:
        if self.loss.recon_weight is None:
            return None
        return (self.loss.recon_weight, self.loss.pred_weight)

    def to_dict(self) -> dict[str, Any]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}


def _coerce_section(cls, payload: dict[str, Any], name: str, problems: list[str]):
    known = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        problems.append(f"{name}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        if key not in known:
            continue
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        problems.append(f"{name}: {exc}")
        return cls()


def config_from_dict(payload: dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config, enumerating every problem found."""
    if not isinstance(payload, dict):
        raise ConfigError("config must be a mapping of sections")
    problems: list[str] = []
    unknown = set(payload) - set(_SECTIONS)
    if unknown:
        problems.append(f"unknown config sections {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        sect = payload.get(name, {})
        if not isinstance(sect, dict):
            problems.append(f"{name}: must be a mapping")
            sect = {}
        sections[name] = _coerce_section(cls, sect, name, problems)
    config = ExperimentConfig(**sections)
    problems.extend(config.validate())
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    payload = yaml.safe_load(path.read_text())
    if payload is None:
        payload = {}
    return config_from_dict(payload)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def derive(config: ExperimentConfig, **section_overrides: dict[str, Any]) -> ExperimentConfig:
    """Copy a config with per-section field overrides, revalidating."""
    sections = {}
    for name in _SECTIONS:
        section = getattr(config, name)
        overrides = section_overrides.get(name)
        if overrides:
            section = dataclasses.replace(section, **overrides)
        sections[name] = section
    derived = ExperimentConfig(**sections)
    problems = derived.validate()
    if problems:
        raise ConfigError("invalid derived config:\n  " + "\n  ".join(problems))
    return derived


# ---------------------------------------------------------------------------
# Dataset resolution
# ---------------------------------------------------------------------------


def load_dataset(config: ExperimentConfig) -> DatasetSplit:
    d = config.dataset
    if d.source == "synthetic":
        return generate_synthetic(
            seed=d.seed,
            n_train_clips=d.n_train_clips,
            n_test_clips=d.n_test_clips,
            clip_len=d.clip_len,
            anomaly_rate=d.anomaly_rate,
            modalities=d.modalities,
        )
    manifest = Path(d.manifest)
    return load_directory(
        manifest.parent, manifest, target_size=tuple(config.model.frame_size)
    )


def pair_modalities(
    clips: Sequence[VideoClip], mod_a: str, mod_b: str
) -> list[tuple[VideoClip, VideoClip]]:
    """Align two modalities by clip id, checking labels and lengths agree."""
    by_id_a = {c.clip_id: c for c in clips if c.modality == mod_a}
    by_id_b = {c.clip_id: c for c in clips if c.modality == mod_b}
    if set(by_id_a) != set(by_id_b):
        missing = sorted(set(by_id_a) ^ set(by_id_b))
        raise DataError(f"modality misalignment: unmatched clip ids {missing}")
    pairs = []
    for clip_id in sorted(by_id_a):
        a, b = by_id_a[clip_id], by_id_b[clip_id]
        if a.n_frames != b.n_frames:
            raise DataError(
                f"modality misalignment for clip {clip_id}: "
                f"{a.n_frames} vs {b.n_frames} frames"
            )
        if (a.labels is None) != (b.labels is None) or (
            a.labels is not None and not (a.labels == b.labels).all()
        ):
            raise DataError(f"modality misalignment for clip {clip_id}: labels differ")
        pairs.append((a, b))
    return pairs


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    run_dir: Path | None
    row: MetricRow
    report: Report
    checkpoint_path: Path | None
    trace: ScoreTrace
    train_log: TrainingLog


def _dump_scores(trace: ScoreTrace, path: Path) -> None:
    with path.open("w") as fh:
        for score, label in zip(trace.scores, trace.labels):
            fh.write(f"{score:.12g} {int(label)}\n")


def run(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    dataset: DatasetSplit | None = None,
    run_id: str = "run",
    loss_label: str | None = None,
) -> RunResult:
    """Train on the train split, score the test split, persist artifacts.

    Fully deterministic given the config's seeds.  ``dataset`` short-circuits
    regeneration when several runs share data.
    """
    problems = config.validate()
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))

    multimodal = config.model.family == "multimodal"
    if not multimodal and len(config.dataset.modalities) != 1:
        raise ConfigError(
            "run() trains a single-modality model; set dataset.modalities to one "
            "entry or use the sweep/compare operations"
        )

    if dataset is None:
        dataset = load_dataset(config)
    data_hash = dataset_hash(dataset)

    window_spec = config.window_spec()
    model_spec = config.model_spec()
    model = build_model(model_spec)
    settings = TrainSettings(
        epochs=config.training.epochs,
        batch_size=config.training.batch_size,
        learning_rate=config.training.learning_rate,
        seed=config.training.seed,
        window_subsample=config.training.window_subsample,
    )

    if multimodal:
        mod_a, mod_b = config.dataset.modalities
        train_pairs = pair_modalities(dataset.train, mod_a, mod_b)
        test_pairs = pair_modalities(dataset.test, mod_a, mod_b)
        train_a = [a for a, _ in train_pairs]
        train_b = [b for _, b in train_pairs]
        audit = TrainingAudit([c.clip_id for c in train_a])
        log = train_model(
            model, train_a, window_spec, settings,
            loss_mode=config.loss.mode, loss_weights=config.loss_weights(),
            audit=audit, paired_clips=train_b,
        )
        trace, skipped = score_split_pairs(
            model, test_pairs, window_spec,
            mode=config.loss.mode, granularity=config.loss.score_granularity,
        )
        modality_label = f"{mod_a}+{mod_b}"
    else:
        modality = config.dataset.modalities[0]
        split = dataset.filter_modality(modality)
        audit = TrainingAudit([c.clip_id for c in split.train])
        log = train_model(
            model, split.train, window_spec, settings,
            loss_mode=config.loss.mode, loss_weights=config.loss_weights(),
            audit=audit,
        )
        trace, skipped = score_split(
            model, split.test, window_spec,
            mode=config.loss.mode, granularity=config.loss.score_granularity,
        )
        modality_label = modality

    auc_roc = roc_auc(trace)
    auc_pr = pr_auc(trace)
    _, baseline_pr = no_skill(trace)

    row = MetricRow(
        run_id=run_id,
        family=config.model.family,
        modality=modality_label,
        loss_mode=loss_label or config.loss.mode,
        input_len=config.window.input_len,
        shift=config.window.shift,
        fusion=config.model.fusion if multimodal else None,
        auc_roc=auc_roc,
        auc_pr=auc_pr,
        no_skill_pr=baseline_pr,
        n_scored=len(trace),
        n_anomalous=trace.n_anomalous,
        skipped_clips=tuple(skipped),
    )
    meta = {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "dataset_hash": data_hash,
        "train_clips_touched": list(log.touched_clip_ids),
        "final_epoch_loss": log.epoch_losses[-1],
    }
    report = Report(meta=meta, rows=[row])

    run_dir = None
    checkpoint_path = None
    if out_dir is not None:
        run_dir = Path(out_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "resolved_config.yaml").write_text(yaml.safe_dump(config.to_dict()))
        checkpoint_path = save_checkpoint(
            run_dir / "checkpoint.pt", model, model_spec, window_spec,
            seed=config.training.seed, config_hash=meta["config_hash"],
        )
        report.save(run_dir, formats=tuple(config.output.formats))
        if config.output.dump_scores:
            _dump_scores(trace, run_dir / "scores.txt")
        if config.output.plots:
            from . import plots

            plots.plot_roc(trace, run_dir / "roc.png", title=f"ROC ({run_id})")
            plots.plot_pr(trace, run_dir / "pr.png", title=f"PR ({run_id})")
            plots.plot_score_timeline(trace, run_dir / "timeline.png")

    return RunResult(
        run_dir=run_dir,
        row=row,
        report=report,
        checkpoint_path=checkpoint_path,
        trace=trace,
        train_log=log,
    )


def score_checkpoint(
    checkpoint: str | Path,
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Score an existing checkpoint against the config's test split."""
    model, model_spec, window_spec, meta = load_checkpoint(checkpoint)
    dataset = load_dataset(config)
    multimodal = model_spec.family == "multimodal"
    if multimodal:
        mod_a, mod_b = config.dataset.modalities
        test_pairs = pair_modalities(dataset.test, mod_a, mod_b)
        trace, skipped = score_split_pairs(
            model, test_pairs, window_spec,
            mode=config.loss.mode, granularity=config.loss.score_granularity,
        )
        modality_label = f"{mod_a}+{mod_b}"
    else:
        modality = config.dataset.modalities[0]
        split = dataset.filter_modality(modality)
        trace, skipped = score_split(
            model, split.test, window_spec,
            mode=config.loss.mode, granularity=config.loss.score_granularity,
        )
        modality_label = modality

    row = MetricRow(
        run_id="score",
        family=model_spec.family,
        modality=modality_label,
        loss_mode=config.loss.mode,
        input_len=window_spec.input_len,
        shift=window_spec.shift,
        fusion=model_spec.fusion if multimodal else None,
        auc_roc=roc_auc(trace),
        auc_pr=pr_auc(trace),
        no_skill_pr=no_skill(trace)[1],
        n_scored=len(trace),
        n_anomalous=trace.n_anomalous,
        skipped_clips=tuple(skipped),
    )
    report = Report(
        meta={
            "config": config.to_dict(),
            "config_hash": config_hash(config),
            "dataset_hash": dataset_hash(dataset),
            "checkpoint": str(checkpoint),
            "checkpoint_config_hash": meta["config_hash"],
        },
        rows=[row],
    )
    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        report.save(run_dir, formats=tuple(config.output.formats))
        if config.output.dump_scores:
            _dump_scores(trace, run_dir / "scores.txt")
    return RunResult(
        run_dir=run_dir, row=row, report=report,
        checkpoint_path=Path(checkpoint), trace=trace,
        train_log=TrainingLog(epoch_losses=[], steps=0, touched_clip_ids=()),
    )


# ---------------------------------------------------------------------------
# Grid operations
# ---------------------------------------------------------------------------


def _grid_meta(config: ExperimentConfig, dataset: DatasetSplit) -> dict[str, Any]:
    return {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "dataset_hash": dataset_hash(dataset),
    }


def _error_row(run_id: str, family: str, modality: str, loss_label: str,
               window: tuple[int, int], fusion: str | None, exc: Exception) -> MetricRow:
    return MetricRow(
        run_id=run_id, family=family, modality=modality, loss_mode=loss_label,
        input_len=window[0], shift=window[1], fusion=fusion,
        error=f"{type(exc).__name__}: {exc}",
    )


def sweep_windows(
    config: ExperimentConfig,
    pairs: Sequence[tuple[int, int]] = DEFAULT_SWEEP_PAIRS,
    out_dir: str | Path | None = None,
) -> Report:
    """One run per (input_len, shift) pair per modality, on shared data."""
    dataset = load_dataset(config)
    report = Report(meta=_grid_meta(config, dataset))
    for input_len, shift in pairs:
        for modality in config.dataset.modalities:
            run_id = f"w{input_len}s{shift}-{modality}"
            sub_dir = Path(out_dir) / run_id if out_dir is not None else None
            try:
                cfg = derive(
                    config,
                    window={"input_len": input_len, "shift": shift},
                    dataset={"modalities": (modality,)},
                )
                result = run(cfg, out_dir=sub_dir, dataset=dataset, run_id=run_id)
                report.add(result.row)
            except (ConfigError, DataError) as exc:
                logger.error("sweep entry %s failed: %s", run_id, exc)
                report.add(_error_row(
                    run_id, config.model.family, modality, config.loss.mode,
                    (input_len, shift), None, exc,
                ))
    if out_dir is not None:
        report.save(out_dir, formats=tuple(config.output.formats))
    return report


LOSS_COMPARISON = (
    # (family, label, (input_len, shift), loss mode)
    ("3dcae", "reconstruction", (8, 0), "full"),
    ("3dcae", "prediction", (6, 2), "pred-only"),
    ("3dcae", "temporal-shift", (6, 2), "full"),
    ("attention-unet", "reconstruction", (8, 0), "full"),
    ("attention-unet", "temporal-shift", (6, 2), "full"),
)


def compare_losses(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
) -> Report:
    """Reconstruction vs prediction vs shifted-window loss, per family."""
    dataset = load_dataset(config)
    report = Report(meta=_grid_meta(config, dataset))
    for family, label, (input_len, shift), mode in LOSS_COMPARISON:
        for modality in config.dataset.modalities:
            run_id = f"{family}-{label}-{modality}"
            sub_dir = Path(out_dir) / run_id if out_dir is not None else None
            try:
                cfg = derive(
                    config,
                    window={"input_len": input_len, "shift": shift},
                    model={"family": family},
                    loss={"mode": mode},
                    dataset={"modalities": (modality,)},
                )
                result = run(cfg, out_dir=sub_dir, dataset=dataset,
                             run_id=run_id, loss_label=label)
                report.add(result.row)
            except (ConfigError, DataError) as exc:
                logger.error("loss comparison entry %s failed: %s", run_id, exc)
                report.add(_error_row(
                    run_id, family, modality, label, (input_len, shift), None, exc,
                ))
    if out_dir is not None:
        report.save(out_dir, formats=tuple(config.output.formats))
    return report


FUSION_COMPARISON = (
    ("reconstruction", (8, 0)),
    ("temporal-shift", (6, 2)),
)


def compare_fusion(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
) -> Report:
    """Concat / add / multiply bottleneck fusion under both loss settings."""
    if config.model.family != "multimodal":
        config = derive(config, model={"family": "multimodal"})
    if len(config.dataset.modalities) != 2:
        raise ConfigError("compare_fusion needs exactly two dataset.modalities")
    dataset = load_dataset(config)
    report = Report(meta=_grid_meta(config, dataset))
    modality_label = "+".join(config.dataset.modalities)
    for fusion in FUSION_MODES:
        for label, (input_len, shift) in FUSION_COMPARISON:
            run_id = f"{fusion}-{label}"
            sub_dir = Path(out_dir) / run_id if out_dir is not None else None
            try:
                cfg = derive(
                    config,
                    window={"input_len": input_len, "shift": shift},
                    model={"fusion": fusion},
                )
                result = run(cfg, out_dir=sub_dir, dataset=dataset,
                             run_id=run_id, loss_label=label)
                report.add(result.row)
            except (ConfigError, DataError) as exc:
                logger.error("fusion comparison entry %s failed: %s", run_id, exc)
                report.add(_error_row(
                    run_id, "multimodal", modality_label, label,
                    (input_len, shift), fusion, exc,
                ))
    if out_dir is not None:
        report.save(out_dir, formats=tuple(config.output.formats))
    return report
