"""Image record, task and split models.
Defines the manifest row entity, the three screening tasks and split assignments.
"""

from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TASK_IDS = (1, 2, 3)


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Domain(str, Enum):
    RGB = "rgb"
    FREQUENCY = "frequency"


class TaskDefinition(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: int
    name: str
    negative_class_name: str
    positive_class_name: str
    input_resolution: int | None = None


TASK_DEFINITIONS: dict[int, TaskDefinition] = {
    1: TaskDefinition(
        task_id=1,
        name="quality",
        negative_class_name="Ungradable",
        positive_class_name="Gradable",
        input_resolution=448,
    ),
    2: TaskDefinition(
        task_id=2,
        name="rdr",
        negative_class_name="No RDR",
        positive_class_name="RDR",
    ),
    3: TaskDefinition(
        task_id=3,
        name="dme",
        negative_class_name="No DME",
        positive_class_name="DME",
    ),
}


class ImageRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str = Field(min_length=1)
    image_path: Path
    task_labels: dict[int, int | None] = Field(default_factory=dict)
    split: Split | None = None

    @field_validator("task_labels")
    @classmethod
    def enforce_binary_labels(cls, value: dict[int, int | None]):
        """Validate task ids and that every present label is 0 or 1."""
        for task_id, label in value.items():
            if task_id not in TASK_IDS:
                raise ValueError(f"Unknown task id {task_id}")
            if label is not None and label not in (0, 1):
                raise ValueError(f"Label for task {task_id} must be 0 or 1")
        return {task_id: value.get(task_id) for task_id in TASK_IDS}

    def label_for(self, task_id: int) -> int | None:
        return self.task_labels.get(task_id)

    def participates_in(self, task_id: int) -> bool:
        """A record takes part in a task iff its label for that task is present."""
        return self.label_for(task_id) is not None


class SplitAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: int
    assignments: dict[str, Split]
    seed: int
    ratios: tuple[float, float, float]

    @model_validator(mode="after")
    def enforce_ratio_sum(self):
        """Validate that the split ratios sum to one."""
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("Split ratios must sum to 1")
        return self

    def ids_in(self, split: Split) -> list[str]:
        return sorted(
            image_id for image_id, value in self.assignments.items() if value == split
        )

    def sizes(self) -> tuple[int, int, int]:
        return (
            len(self.ids_in(Split.TRAIN)),
            len(self.ids_in(Split.VAL)),
            len(self.ids_in(Split.TEST)),
        )
