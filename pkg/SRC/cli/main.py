"""Argument parsing and exit-code mapping for the ynet command."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..config.settings import settings
from ..shared.exceptions import (
    CodecError,
    DatasetIOError,
    GenerationError,
    NumericalError,
    YNetError,
)
from ..shared.logging import configure_logging
from . import commands

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def exit_code_for(error: YNetError) -> int:
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, (CodecError, DatasetIOError, GenerationError)):
        return EXIT_IO
    return EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ynet",
        description="Y-Net lesion segmentation with a deep-clustering head.",
    )
    parser.add_argument("--log-level", default=None, help=f"override YNET_LOG_LEVEL (default {settings.LOG_LEVEL})")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic lesion dataset")
    synth.add_argument("--config", type=Path, help="run config with a data.synth section; flags override it")
    synth.add_argument("--n", type=int, help="number of samples, a multiple of 4 (default 200)")
    synth.add_argument("--size", type=int, help="image side in pixels (default 64)")
    synth.add_argument("--seed", type=int, help="generator seed (default 0)")
    synth.add_argument("--out", type=Path, help="output directory")
    synth.set_defaults(handler=commands.cmd_synth)

    train = sub.add_parser("train-seg", help="phase 1: train the segmentation autoencoder")
    train.add_argument("--config", type=Path, required=True)
    train.set_defaults(handler=commands.cmd_train_seg)

    cluster = sub.add_parser("cluster", help="phase 2: initialise or train the clustering head")
    cluster.add_argument("--config", type=Path, required=True)
    cluster.add_argument("--phase", choices=("init", "train"), required=True)
    cluster.add_argument("--checkpoint", type=Path, help="input checkpoint (defaults to the previous phase's)")
    cluster.set_defaults(handler=commands.cmd_cluster)

    evaluate = sub.add_parser("eval", help="score a checkpoint on the test split")
    evaluate.add_argument("--config", type=Path, required=True)
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.set_defaults(handler=commands.cmd_eval)

    predict = sub.add_parser("predict", help="segment a single PPM image")
    predict.add_argument("--checkpoint", type=Path, required=True)
    predict.add_argument("--image", type=Path, required=True)
    predict.add_argument("--out", type=Path, required=True)
    predict.add_argument("--embed", action="store_true", help="also print the embedding and cluster label")
    predict.set_defaults(handler=commands.cmd_predict)

    compare = sub.add_parser("compare", help="train Y-Net and the U-Net baseline under one budget")
    compare.add_argument("--config", type=Path, required=True)
    compare.set_defaults(handler=commands.cmd_compare)

    params = sub.add_parser("params", help="parameter count of a config, or the config closest to a target")
    source = params.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path)
    source.add_argument("--target", type=int)
    params.add_argument("--image-size", type=int, default=512)
    params.add_argument("--in-channels", type=int, default=3)
    params.set_defaults(handler=commands.cmd_params)
    return parser


def _parse(parser: argparse.ArgumentParser, argv: Optional[List[str]]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command == "synth" and args.config is None and args.out is None:
        parser.error("synth needs --out (or --config)")
    return args


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (None, 0) else EXIT_VALIDATION
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except YNetError as e:
        code = exit_code_for(e)
        logger.debug("command %s failed", args.command, exc_info=settings.debug)
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    raise SystemExit(main())
