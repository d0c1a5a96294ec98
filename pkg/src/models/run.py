"""Run configuration model.
One RunConfig drives every command; its snapshot is embedded in every artifact.
"""

from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field, field_validator
from .evaluation import EvaluationConfig
from .explanation import ExplainConfig
from .fusion import FusionConfig
from .preprocessing import FrequencyConfig, SpatialConfig
from .record import TASK_IDS, Domain
from .training import (
    NATIVE_INPUT_SIZE,
    ArchitectureId,
    BackboneSpec,
    PretrainedSource,
    TrainConfig,
)


class RunSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    manifest: Path = Path("data/manifest.csv")
    task_id: int = 1
    domain: Domain = Domain.RGB
    architectures: list[ArchitectureId] = Field(
        default_factory=lambda: list(ArchitectureId)
    )
    seed: int = 42
    output_dir: Path = Path("runs")
    input_size: int | None = Field(default=None, gt=0)

    @field_validator("task_id")
    @classmethod
    def enforce_task_id(cls, value: int):
        if value not in TASK_IDS:
            raise ValueError(f"task_id must be one of {TASK_IDS}")
        return value


class SplitSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ratios: tuple[float, float, float] = (0.64, 0.16, 0.20)

    @field_validator("ratios")
    @classmethod
    def enforce_ratio_sum(cls, value: tuple[float, float, float]):
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("Split ratios must sum to 1")
        return value


class BackboneOverrides(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    pretrained_source: PretrainedSource | None = None
    encoder_name: str | None = None
    checkpoint_path: Path | None = None
    unfreeze_fraction: float | None = Field(default=None, ge=0.0, le=1.0)


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=100, gt=0)
    image_size: int = Field(default=256, gt=15)
    seed: int = 42
    output_dir: Path = Path("data/synth")
    blur_sigma_range: tuple[float, float] = (2.0, 4.0)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    run: RunSection = RunSection()
    split: SplitSection = SplitSection()
    spatial: SpatialConfig = SpatialConfig()
    frequency: FrequencyConfig = FrequencyConfig()
    training: TrainConfig = TrainConfig()
    backbones: dict[ArchitectureId, BackboneOverrides] = Field(default_factory=dict)
    fusion: FusionConfig = FusionConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    explain: ExplainConfig = ExplainConfig()
    synth: SynthConfig = SynthConfig()

    def input_size(self) -> int:
        """Explicit override, else 448 for task 1, else the backbone-native size."""
        if self.run.input_size is not None:
            return self.run.input_size
        return self.spatial.resize_target(self.run.task_id, NATIVE_INPUT_SIZE)

    def backbone_spec(self, architecture: ArchitectureId) -> BackboneSpec:
        overrides = self.backbones.get(architecture, BackboneOverrides())
        default_source = (
            PretrainedSource.RETINAL_FOUNDATION_CHECKPOINT
            if architecture == ArchitectureId.RETINAL_FOUNDATION
            else PretrainedSource.GENERIC_IMAGES
        )
        values = {
            "architecture_id": architecture,
            "pretrained_source": overrides.pretrained_source or default_source,
            "encoder_name": overrides.encoder_name,
            "checkpoint_path": overrides.checkpoint_path,
            "input_size": self.input_size(),
        }
        if overrides.unfreeze_fraction is not None:
            values["unfreeze_fraction"] = overrides.unfreeze_fraction
        return BackboneSpec(**values)

    def training_config(self) -> TrainConfig:
        return self.training.model_copy(update={"seed": self.run.seed})

    def fusion_training_config(self) -> TrainConfig:
        base = self.fusion.training or self.training
        return base.model_copy(update={"seed": self.run.seed})

    def task_dir(self, task_id: int | None = None) -> Path:
        """Artifact directory of one task inside the run output directory."""
        return self.run.output_dir / f"task{task_id or self.run.task_id}"

    @property
    def split_file(self) -> Path:
        return self.task_dir() / "splits.csv"
