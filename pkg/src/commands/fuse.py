"""fuse: feature-level fusion of the trained models of one domain."""

import argparse
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("fuse", help="Train the feature-fusion head")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    path = pipeline_from_args(args).cmd_fuse()
    print(path)
    return 0
