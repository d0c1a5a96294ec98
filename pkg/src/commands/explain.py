"""explain: Grad-CAM panels and an HTML report for selected images."""

import argparse
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("explain", help="Render Grad-CAM panels")
    add_common_arguments(parser)
    parser.add_argument(
        "--image-ids",
        nargs="+",
        default=None,
        help="Images to explain (default: the first test images)",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    directory = pipeline_from_args(args).cmd_explain(args.image_ids)
    print(directory / "index.html")
    return 0
