"""evaluate: metric report over the test split."""

import argparse
from ..services.evaluation_service import format_report_table
from .common import add_common_arguments, pipeline_from_args


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Write the evaluation report")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    report = pipeline_from_args(args).cmd_evaluate()
    print(format_report_table(report), end="")
    return 0
