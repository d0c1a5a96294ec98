"""Scored prediction sets and evaluation report models.
Defines the Table-2 style report rows keyed by (task, domain, model).
"""

from dataclasses import dataclass
from enum import Enum
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from .record import Domain

FUSION_MODEL = "fusion"


class ThresholdRule(str, Enum):
    FIXED = "fixed"
    YOUDEN = "youden"


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    threshold_rule: ThresholdRule = ThresholdRule.FIXED
    report_tasks: list[int] | None = None
    report_domains: list[Domain] | None = None
    include_fusion: bool = True


@dataclass(frozen=True)
class ScoredSet:
    """Parallel arrays of image ids, scores in [0, 1] and binary labels."""

    image_ids: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not len(self.image_ids) == len(self.scores) == len(self.labels):
            raise ValueError("ScoredSet arrays must have equal lengths")

    @classmethod
    def from_arrays(cls, scores, labels, image_ids=None) -> "ScoredSet":
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if image_ids is None:
            image_ids = tuple(str(i) for i in range(len(scores)))
        return cls(tuple(image_ids), scores, labels)

    @property
    def num_positive(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def num_negative(self) -> int:
        return int((self.labels == 0).sum())


class RowKey(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: int
    domain: Domain
    model: str

    def label(self) -> str:
        return f"task{self.task_id}/{self.domain.value}/{self.model}"


class EvalRow(BaseModel):
    key: RowKey
    auroc: float | None
    auprc: float | None
    sensitivity: float | None
    specificity: float | None
    threshold: float

    @property
    def has_undefined(self) -> bool:
        return any(
            value is None
            for value in (self.auroc, self.auprc, self.sensitivity, self.specificity)
        )


class EvalReport(BaseModel):
    rows: list[EvalRow]
    threshold_rule: ThresholdRule
    split: str = "test"
    seed: int

    @property
    def has_undefined(self) -> bool:
        return any(row.has_undefined for row in self.rows)
