"""Feature matrix, standardizer and fusion model containers.
Defines the per-model embedding table and the training-split statistics used
to standardize it before feature-level fusion.
"""

from dataclasses import dataclass, field
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from .record import Domain
from .training import TrainConfig

STD_CONVENTION = "population"


class FusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_dim: int = Field(default=256, gt=0)
    dropout: float = Field(default=0.3, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    extraction_batch_size: int = Field(default=32, gt=0)
    training: TrainConfig | None = None


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are images ordered by image_id, columns the source model's embedding."""

    values: np.ndarray
    image_ids: tuple[str, ...]
    source_model: str
    domain: Domain
    layer_name: str = "pooled"

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("FeatureMatrix values must be 2D")
        if self.values.shape[0] != len(self.image_ids):
            raise ValueError("FeatureMatrix row count must match image_ids")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("FeatureMatrix rows must be finite")

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_columns(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StandardizerStats:
    """Per-column mean and std fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float
    degenerate_columns: tuple[int, ...] = field(default_factory=tuple)
    convention: str = STD_CONVENTION
    num_rows: int = 0

    @property
    def has_degenerate_columns(self) -> bool:
        return bool(self.degenerate_columns)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "epsilon": self.epsilon,
            "degenerate_columns": list(self.degenerate_columns),
            "convention": self.convention,
            "num_rows": self.num_rows,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StandardizerStats":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            epsilon=float(data["epsilon"]),
            degenerate_columns=tuple(data["degenerate_columns"]),
            convention=data["convention"],
            num_rows=int(data["num_rows"]),
        )


@dataclass(frozen=True)
class FusionSource:
    checkpoint_id: str
    stats: StandardizerStats
    feature_dim: int
