"""Factory functions for the service instances used by the CLI commands."""

from ..models.run import RunConfig
from ..services.manifest_service import ManifestService
from ..services.pipeline_service import PipelineService
from ..services.split_service import SplitService


def get_manifest_service() -> ManifestService:
    """Get a ManifestService instance."""
    return ManifestService()


def get_split_service() -> SplitService:
    """Get a SplitService instance."""
    return SplitService()


def get_pipeline_service(config: RunConfig, force: bool = False) -> PipelineService:
    """Get a PipelineService wired to the manifest and split services."""
    return PipelineService(
        config,
        manifest_service=get_manifest_service(),
        split_service=get_split_service(),
        force=force,
    )
