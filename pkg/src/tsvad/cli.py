"""Command-line entry point.

Subcommands: run, sweep, compare-losses, compare-fusion, generate-data,
score.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 training failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from . import experiment
from .data import write_dataset
from .errors import ConfigError, DataError, TrainingError

logger = logging.getLogger("tsvad")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="experiment config (YAML)")
    parser.add_argument("--seed", type=int, default=None, help="override training seed")
    parser.add_argument("--out", type=Path, default=None, help="override output directory")
    parser.add_argument("--device", type=str, default="cpu", help="compute device (cpu)")
    parser.add_argument("--workers", type=int, default=None, help="CPU threads for tensor ops")


def _prepare(args: argparse.Namespace) -> experiment.ExperimentConfig:
    if args.device != "cpu":
        raise ConfigError(f"only cpu is supported in this build, got --device {args.device!r}")
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        torch.set_num_threads(args.workers)
    config = experiment.load_config(args.config)
    if args.seed is not None:
        config = experiment.derive(config, training={"seed": args.seed})
    if args.out is not None:
        config = experiment.derive(config, output={"dir": str(args.out)})
    return config


def _out_dir(config: experiment.ExperimentConfig, label: str) -> Path:
    return Path(config.output.dir) / f"{label}-{experiment.config_hash(config)}"


def _cmd_run(args: argparse.Namespace) -> int:
    config = _prepare(args)
    out = _out_dir(config, "run")
    result = experiment.run(config, out_dir=out)
    print(result.report.to_text())
    print(f"artifacts written to {out}")
    return EXIT_OK


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for token in text.split(","):
        token = token.strip()
        try:
            w, s = token.split(":")
            pairs.append((int(w), int(s)))
        except ValueError:
            raise ConfigError(f"bad --pairs entry {token!r}; expected W:S") from None
    return pairs


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _prepare(args)
    pairs = _parse_pairs(args.pairs) if args.pairs else experiment.DEFAULT_SWEEP_PAIRS
    out = _out_dir(config, "sweep")
    report = experiment.sweep_windows(config, pairs=pairs, out_dir=out)
    print(report.to_text())
    print(f"artifacts written to {out}")
    return EXIT_OK


def _cmd_compare_losses(args: argparse.Namespace) -> int:
    config = _prepare(args)
    out = _out_dir(config, "losses")
    report = experiment.compare_losses(config, out_dir=out)
    print(report.to_text())
    print(f"artifacts written to {out}")
    return EXIT_OK


def _cmd_compare_fusion(args: argparse.Namespace) -> int:
    config = _prepare(args)
    out = _out_dir(config, "fusion")
    report = experiment.compare_fusion(config, out_dir=out)
    print(report.to_text())
    print(f"artifacts written to {out}")
    return EXIT_OK


def _cmd_generate_data(args: argparse.Namespace) -> int:
    config = _prepare(args)
    if config.dataset.source != "synthetic":
        raise ConfigError("generate-data needs a config with dataset.source: synthetic")
    split = experiment.load_dataset(config)
    out = args.out if args.out is not None else Path(config.output.dir) / "dataset"
    manifest = write_dataset(split, out)
    print(f"dataset written: {manifest}")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    config = _prepare(args)
    out = _out_dir(config, "score")
    result = experiment.score_checkpoint(args.checkpoint, config, out_dir=out)
    print(result.report.to_text())
    print(f"artifacts written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsvad",
        description="Shifted-window autoencoder experiments for video anomaly detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one model and score the test split")
    _add_common(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="window-geometry sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--pairs", type=str, default=None,
                         help="comma-separated W:S pairs (default 8:0,6:2,4:4,4:1)")
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_losses = sub.add_parser("compare-losses", help="loss-function comparison grid")
    _add_common(p_losses)
    p_losses.set_defaults(handler=_cmd_compare_losses)

    p_fusion = sub.add_parser("compare-fusion", help="multimodal fusion comparison grid")
    _add_common(p_fusion)
    p_fusion.set_defaults(handler=_cmd_compare_fusion)

    p_gen = sub.add_parser("generate-data", help="write the synthetic dataset to disk")
    _add_common(p_gen)
    p_gen.set_defaults(handler=_cmd_generate_data)

    p_score = sub.add_parser("score", help="score an existing checkpoint")
    _add_common(p_score)
    p_score.add_argument("--checkpoint", required=True, type=Path)
    p_score.set_defaults(handler=_cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except TrainingError as exc:
        logger.error("training failure: %s", exc)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
