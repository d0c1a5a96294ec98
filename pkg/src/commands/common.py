"""Arguments shared by every subcommand."""

import argparse
from pathlib import Path
from ..core.config import load_run_config
from ..core.dependencies_services import get_pipeline_service
from ..services.pipeline_service import PipelineService


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML run config")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. --set training.max_epochs=5 (repeatable)",
    )
    parser.add_argument(
        "--force", action="store_true", help="Recompute outputs that already exist"
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default from env)")


def pipeline_from_args(args: argparse.Namespace, extra_overrides=()) -> PipelineService:
    config = load_run_config(args.config, [*args.overrides, *extra_overrides])
    return get_pipeline_service(config, force=args.force)
