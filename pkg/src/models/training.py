"""Backbone, training configuration and training history models.
Defines the four backbone families, the two-stage / foundation training
settings and the per-epoch history stored with every checkpoint.
"""

from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ArchitectureId(str, Enum):
    LIGHTWEIGHT_CNN = "lightweight_cnn"
    RESIDUAL_CNN = "residual_cnn"
    PATCH_TRANSFORMER = "patch_transformer"
    RETINAL_FOUNDATION = "retinal_foundation"


class PretrainedSource(str, Enum):
    GENERIC_IMAGES = "generic-images"
    RETINAL_FOUNDATION_CHECKPOINT = "retinal-foundation-checkpoint"
    NONE = "none"


class TrainStage(str, Enum):
    HEAD_ONLY = "head_only"
    FINETUNE = "finetune"
    FOUNDATION_ADAPT = "foundation_adapt"


FEATURE_DIMS: dict[ArchitectureId, int] = {
    ArchitectureId.LIGHTWEIGHT_CNN: 1280,
    ArchitectureId.RESIDUAL_CNN: 512,
    ArchitectureId.PATCH_TRANSFORMER: 768,
    ArchitectureId.RETINAL_FOUNDATION: 1024,
}

DEFAULT_ENCODERS: dict[ArchitectureId, str] = {
    ArchitectureId.LIGHTWEIGHT_CNN: "mobilenet_v2",
    ArchitectureId.RESIDUAL_CNN: "resnet18",
    ArchitectureId.PATCH_TRANSFORMER: "vit_base_patch16_224",
    ArchitectureId.RETINAL_FOUNDATION: "vit_large_patch16_224",
}

NATIVE_INPUT_SIZE = 224


class BackboneSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    architecture_id: ArchitectureId
    pretrained_source: PretrainedSource = PretrainedSource.GENERIC_IMAGES
    encoder_name: str | None = None
    checkpoint_path: Path | None = None
    unfreeze_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    head_hidden_dim: int = Field(default=256, gt=0)
    head_dropout: float = Field(default=0.3, ge=0.0, lt=1.0)
    input_size: int = Field(default=NATIVE_INPUT_SIZE, gt=0)

    @model_validator(mode="after")
    def enforce_foundation_source(self):
        """The foundation backbone loads weights from an encoder checkpoint."""
        if (
            self.pretrained_source == PretrainedSource.RETINAL_FOUNDATION_CHECKPOINT
            and self.architecture_id != ArchitectureId.RETINAL_FOUNDATION
        ):
            raise ValueError("Only retinal_foundation loads a retinal checkpoint")
        return self

    @property
    def encoder(self) -> str:
        return self.encoder_name or DEFAULT_ENCODERS[self.architecture_id]

    @property
    def is_transformer(self) -> bool:
        return self.architecture_id in (
            ArchitectureId.PATCH_TRANSFORMER,
            ArchitectureId.RETINAL_FOUNDATION,
        )

    @property
    def default_stage(self) -> TrainStage:
        if self.architecture_id == ArchitectureId.RETINAL_FOUNDATION:
            return TrainStage.FOUNDATION_ADAPT
        return TrainStage.FINETUNE


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=1e-4, gt=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    batch_size: int = Field(default=16, gt=0)
    max_epochs: int = Field(default=100, gt=0)
    early_stop_patience: int = Field(default=10, ge=1)
    monitor: str = "val_auroc"
    stage: TrainStage = TrainStage.HEAD_ONLY
    cutmix_alpha: float = Field(default=1.0, gt=0.0)
    use_cutmix: bool | None = None
    class_weighted: bool = False
    log_epsilon: float = Field(default=1e-7, gt=0.0)
    num_workers: int = Field(default=0, ge=0)
    seed: int = 42

    @property
    def cutmix_enabled(self) -> bool:
        """CutMix is on for foundation adaptation unless explicitly configured."""
        if self.use_cutmix is not None:
            return self.use_cutmix
        return self.stage == TrainStage.FOUNDATION_ADAPT

    def for_stage(self, stage: TrainStage) -> "TrainConfig":
        return self.model_copy(update={"stage": stage})


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_auroc: float
    trainable_hash: str


class TrainingHistory(BaseModel):
    stage: TrainStage
    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_auroc(self) -> float:
        if not self.epochs:
            return float("nan")
        return self.epochs[self.best_epoch - 1].val_auroc

    @property
    def train_losses(self) -> list[float]:
        return [record.train_loss for record in self.epochs]
