"""Preprocessing configuration models and the spectral image container.
Defines the spatial (RGB) and frequency-domain preprocessing settings.
"""

from dataclasses import dataclass
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class NormalizationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    neutral_offset: float = Field(default=0.5, ge=0.0, le=1.0)
    blur_scale: float = Field(default=1.0 / 30.0, gt=0.0, lt=1.0)
    gain: float = Field(default=1.0, gt=0.0)


class AugmentationPolicy(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hflip_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    vflip_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    rotation_degrees_max: float = Field(default=15.0, ge=0.0, le=180.0)
    zoom_range: tuple[float, float] = (0.9, 1.1)

    @model_validator(mode="after")
    def enforce_zoom_range(self):
        """Validate 0 < lo <= 1 <= hi."""
        low, high = self.zoom_range
        if not 0 < low <= 1 <= high:
            raise ValueError("zoom_range must satisfy 0 < lo <= 1 <= hi")
        return self

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(
            hflip_prob=0.0, vflip_prob=0.0, rotation_degrees_max=0.0, zoom_range=(1, 1)
        )


class SpatialConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    crop_size: int = Field(default=800, gt=0)
    task1_resize: int = Field(default=448, gt=0)
    foreground_threshold: float = Field(default=0.05, gt=0.0, lt=1.0)
    pad_small_images: bool = False
    normalization: NormalizationConfig = NormalizationConfig()
    augmentation: AugmentationPolicy = AugmentationPolicy()

    def resize_target(self, task_id: int, native_size: int) -> int:
        """448 for task 1, the backbone's native input size otherwise."""
        return self.task1_resize if task_id == 1 else native_size


class FrequencyConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_percentile: float = Field(default=0.99, gt=0.0, le=1.0)
    channels: int = Field(default=3, ge=1)
    low_frequency_radius: float = Field(default=0.1, gt=0.0, le=1.0)


@dataclass(frozen=True)
class SpectralImage:
    """Centered DFT magnitude of one image (zero frequency at the grid center)."""

    magnitude: np.ndarray
    clip_percentile: float | None = None
    source_id: str | None = None
    normalized: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape  # type: ignore[return-value]
