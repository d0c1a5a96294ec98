"""synth: generate a synthetic fundus dataset and its manifest."""

import argparse
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="Generate a synthetic dataset")
    add_common_arguments(parser)
    parser.add_argument("--n", type=int, default=None, help="Number of images")
    parser.add_argument("--image-size", type=int, default=None, help="Image side in pixels")
    parser.add_argument("--output-dir", default=None, help="Dataset directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    overrides = []
    if args.n is not None:
        overrides.append(f"synth.n={args.n}")
    if args.image_size is not None:
        overrides.append(f"synth.image_size={args.image_size}")
    if args.output_dir is not None:
        overrides.append(f"synth.output_dir={args.output_dir!r}")
    manifest = pipeline_from_args(args, overrides).cmd_synth()
    print(manifest)
    return 0
