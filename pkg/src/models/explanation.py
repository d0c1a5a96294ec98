"""Grad-CAM heatmap container and explanation settings."""

from dataclasses import dataclass
import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ExplainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=0.4, ge=0.0, le=1.0)
    colormap: str = "viridis"
    target_class: int = Field(default=1, ge=0, le=1)
    image_ids: list[str] = Field(default_factory=list)
    max_images: int = Field(default=8, gt=0)


@dataclass(frozen=True)
class Heatmap:
    """Relevance map in [0, 1] at model input resolution."""

    values: np.ndarray
    target_class: int
    layer_name: str
    image_id: str | None = None
    grid_shape: tuple[int, int] | None = None

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def peak(self) -> tuple[int, int]:
        row, col = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(row), int(col)

    def left_mass_fraction(self) -> float:
        total = float(self.values.sum())
        if total == 0:
            return 0.0
        half = self.values.shape[1] // 2
        return float(self.values[:, :half].sum()) / total

    def mass_quantiles(self, shares=(0.05, 0.10, 0.25)) -> dict[str, float]:
        """Fraction of total mass carried by the top share of pixels."""
        flat = np.sort(self.values.ravel())[::-1]
        total = float(flat.sum())
        result = {}
        for share in shares:
            count = max(1, int(round(share * flat.size)))
            result[f"top_{int(share * 100)}pct"] = (
                float(flat[:count].sum()) / total if total else 0.0
            )
        return result
