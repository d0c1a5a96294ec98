"""Stratified split service.
Produces deterministic per-task train/validation/test assignments and class counts.
"""

import math
from typing import Sequence
import numpy as np
from ..core.exceptions import InsufficientClassError, MissingLabelError
from ..models.record import ImageRecord, Split, SplitAssignment

DEFAULT_RATIOS = (0.64, 0.16, 0.20)
DEFAULT_SEED = 42
SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)
_FLOOR_TOLERANCE = 1e-9


class SplitService:
    """Service for stratified splitting and class distribution queries."""

    @staticmethod
    def apportion(class_size: int, ratios: Sequence[float]) -> list[int]:
        """Split a class size into per-split counts by largest remainder.
        Every count stays within one item of ratio * class_size; ties in the
        remainder favour train, the largest bucket."""
        quotas = [class_size * ratio for ratio in ratios]
        counts = [math.floor(q + _FLOOR_TOLERANCE) for q in quotas]
        leftover = class_size - sum(counts)
        order = sorted(
            range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i)
        )
        for index in order[:leftover]:
            counts[index] += 1
        return counts

    def stratified_split(
        self,
        records: Sequence[ImageRecord],
        ratios: tuple[float, float, float] = DEFAULT_RATIOS,
        seed: int = DEFAULT_SEED,
        task_id: int = 1,
    ) -> SplitAssignment:
        """Assign each record labeled for task_id to train, val or test.
        Stratified by label; deterministic for a fixed seed and record set."""
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError("Split ratios must sum to 1")

        by_class: dict[int, list[str]] = {0: [], 1: []}
        for record in records:
            label = record.label_for(task_id)
            if label is None:
                raise MissingLabelError(
                    f"Record {record.image_id} has no label for task {task_id}."
                )
            by_class[label].append(record.image_id)

        requested = sum(1 for ratio in ratios if ratio > 0)
        rng = np.random.default_rng(seed)
        assignments: dict[str, Split] = {}

        for label in (0, 1):
            ids = sorted(by_class[label])
            if not ids:
                continue
            if len(ids) < requested:
                raise InsufficientClassError(
                    f"Class {label} of task {task_id} has {len(ids)} records, "
                    f"fewer than the {requested} splits requested."
                )
            shuffled = [ids[i] for i in rng.permutation(len(ids))]
            start = 0
            for split, count in zip(SPLIT_ORDER, self.apportion(len(ids), ratios)):
                for image_id in shuffled[start : start + count]:
                    assignments[image_id] = split
                start += count

        return SplitAssignment(
            task_id=task_id, assignments=assignments, seed=seed, ratios=ratios
        )

    @staticmethod
    def class_distribution(
        records: Sequence[ImageRecord], task_id: int, split: Split | None = None
    ) -> tuple[int, int]:
        """Count (negative, positive) records of a task, optionally within one split.
        The negative class is the one listed first for the task (e.g. Ungradable)."""
        negative = positive = 0
        for record in records:
            label = record.label_for(task_id)
            if label is None or (split is not None and record.split != split):
                continue
            if label == 1:
                positive += 1
            else:
                negative += 1
        return negative, positive
