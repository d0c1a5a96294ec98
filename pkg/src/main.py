"""Command-line entry point for the UWF screening pipeline.

This module builds the argument parser, configures logging and maps pipeline
errors to process exit codes (2 config, 3 data, 4 training divergence).
"""

import argparse
import logging
import sys
import torch
from .commands import evaluate, explain, fuse, split, synth, train
from .core.config import settings
from .core.exceptions import UWFScreenError
from .core.logging_config import configure_logging

logger = logging.getLogger("uwfscreen")

COMMANDS = (split, train, fuse, evaluate, explain, synth)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwfscreen",
        description="Ultra-widefield retinal image screening: "
        "split, train, fuse, evaluate, explain, synth.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.UWF_LOG_LEVEL)
    if settings.UWF_NUM_THREADS:
        torch.set_num_threads(settings.UWF_NUM_THREADS)

    try:
        return args.handler(args)
    except UWFScreenError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
