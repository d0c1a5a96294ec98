"""split: stratified train/validation/test assignment for the configured task."""

import argparse
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("split", help="Write the per-task split CSV")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    path = pipeline_from_args(args).cmd_split()
    print(path)
    return 0
