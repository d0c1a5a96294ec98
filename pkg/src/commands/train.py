"""train: two-stage fine-tuning (or foundation adaptation) per architecture."""

import argparse
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train one checkpoint per architecture")
    add_common_arguments(parser)
    parser.add_argument(
        "--dump-stages",
        action="store_true",
        help="Write PNGs of each spatial preprocessing stage for a few training images",
    )
    parser.add_argument(
        "--dump-spectrum",
        action="store_true",
        help="Write the clipped, normalized spectrum of a few training images",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    paths = pipeline_from_args(args).cmd_train(
        dump_stages=args.dump_stages, dump_spectrum=args.dump_spectrum
    )
    for path in paths:
        print(path)
    return 0
