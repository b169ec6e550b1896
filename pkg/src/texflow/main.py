# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import argparse
import sys
from collections.abc import Sequence
from typing import Any

from texflow import __version__
from texflow.config import get_settings, load_run_config, parse_override
from texflow.exception_handlers import handle_exception
from texflow.service import Pipeline
from texflow.utils.logger import configure_logging, logger

"""
Command-line entry point: `texflow {simulate,dataset,train,predict,evaluate,render}`.
"""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML run file")
    common.add_argument("-o", "--out", required=True, help="Output directory")
    common.add_argument("--seed", type=int, help="Global seed")
    common.add_argument(
        "--preset", choices=("desk", "paper", "full"), help="Default geometry and model scale (full = paper)"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.FIELD=VALUE",
        help="Override one config value (repeatable; flags win over the file)",
    )
    common.add_argument("--log-level", help="Logging level (default from TEXFLOW_LOG_LEVEL)")

    parser = argparse.ArgumentParser(prog="texflow", description="Textured microchannel flow surrogates")
    parser.add_argument("--version", action="version", version=f"texflow {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Run the lattice Boltzmann solver")
    simulate.add_argument("--validate", action="store_true", help="Run the Poiseuille check first")

    dataset = commands.add_parser("dataset", parents=[common], help="Build a dataset from run directories")
    dataset.add_argument("runs", nargs="+", help="Simulation run directories")
    dataset.add_argument("--include-mask", action="store_true", default=None, help="Add the solid mask channel")

    train = commands.add_parser("train", parents=[common], help="Train a U-Net")
    train.add_argument("dataset", help="Dataset directory")
    train.add_argument("--attention", action=argparse.BooleanOptionalAction, default=None, help="Gate skips")

    predict = commands.add_parser("predict", parents=[common], help="Predict velocity fields")
    predict.add_argument("checkpoint", help="Checkpoint file (.txfw)")
    predict.add_argument("source", help="Dataset directory or snapshot file")
    predict.add_argument("--split", choices=("train", "val", "test"), default="test")

    evaluate = commands.add_parser("evaluate", parents=[common], help="Score checkpoints on a dataset split")
    evaluate.add_argument("checkpoints", nargs="+", help="Checkpoint files (.txfw)")
    evaluate.add_argument("--dataset", required=True, help="Dataset directory")
    evaluate.add_argument("--split", choices=("train", "val", "test"), default="test")
    evaluate.add_argument(
        "--normalized", action="store_true", help="Score in normalized units instead of physical units"
    )

    render = commands.add_parser("render", parents=[common], help="Render field files as heatmaps and profiles")
    render.add_argument("files", nargs="+", help="Field files (.txfs)")
    render.add_argument(
        "--x-over-l",
        dest="x_over_l",
        type=float,
        action="append",
        metavar="X",
        help="Profile station as a fraction of the channel length (repeatable)",
    )
    return parser


def _overrides(args: argparse.Namespace) -> list[dict[str, Any]]:
    overrides = [parse_override(text) for text in args.overrides]
    if args.seed is not None:
        overrides.append({"seed": args.seed})
    if getattr(args, "include_mask", None):
        overrides.append({"dataset": {"include_mask": True}})
    if getattr(args, "x_over_l", None):
        overrides.append({"render": {"x_over_l": args.x_over_l}})
    return overrides


def _dispatch(pipeline: Pipeline, args: argparse.Namespace) -> None:
    if args.command == "simulate":
        pipeline.simulate(args.out, validate=args.validate)
    elif args.command == "dataset":
        pipeline.build_dataset(args.runs, args.out)
    elif args.command == "train":
        pipeline.train(args.dataset, args.out, attention=args.attention)
    elif args.command == "predict":
        pipeline.predict(args.checkpoint, args.source, args.out, split=args.split)
    elif args.command == "evaluate":
        pipeline.evaluate(args.checkpoints, args.dataset, args.out, split=args.split, normalized=args.normalized)
    elif args.command == "render":
        pipeline.render(args.files, args.out)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Entry point for the application.

    Args:
        argv (Sequence[str] | None): Arguments without the program name; defaults to `sys.argv[1:]`.

    Returns:
        int: Exit code (0 success, 2 configuration, 3 divergence, 4 I/O, 1 unexpected).
    """
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_DIR)
    try:
        config = load_run_config(args.config, args.preset, _overrides(args))
        with Pipeline(config) as pipeline:
            logger.info(f"texflow {args.command} -> {args.out}")
            _dispatch(pipeline, args)
    except Exception as e:
        return handle_exception(e)
    return 0


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
