"""Torch datasets over manifest records for one task and one input domain."""

import logging
from typing import Callable, Sequence
import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset
from ..core.exceptions import MissingLabelError
from ..core.reproducibility import derive_seed
from ..models.preprocessing import FrequencyConfig, SpatialConfig
from ..models.record import Domain, ImageRecord
from .frequency_service import FrequencyPipeline
from .spatial_service import SpatialPipeline, load_image

logger = logging.getLogger(__name__)

Pipeline = Callable[..., torch.Tensor]


def make_pipeline(
    domain: Domain,
    spatial_config: SpatialConfig,
    frequency_config: FrequencyConfig,
    output_size: int,
) -> SpatialPipeline | FrequencyPipeline:
    if Domain(domain) == Domain.FREQUENCY:
        return FrequencyPipeline(spatial_config, frequency_config, output_size)
    return SpatialPipeline(spatial_config, output_size)


class ScreeningDataset(Dataset):
    """(tensor, label) pairs for the records of one task.
    Training datasets augment with a generator derived from (seed, image_id, epoch)
    so every sample is reproducible regardless of worker layout; evaluation
    datasets are deterministic and cache their tensors."""

    def __init__(
        self,
        records: Sequence[ImageRecord],
        task_id: int,
        pipeline: Pipeline,
        seed: int = 42,
        train: bool = False,
        cache: bool | None = None,
    ):
        self.records = list(records)
        self.task_id = task_id
        self.pipeline = pipeline
        self.seed = seed
        self.train = train
        self.cache = (not train) if cache is None else cache
        self.epoch = 0
        self._cached: dict[int, torch.Tensor] = {}

        labels = [record.label_for(task_id) for record in self.records]
        missing = [r.image_id for r, label in zip(self.records, labels) if label is None]
        if missing:
            raise MissingLabelError(
                f"{len(missing)} records lack a task {task_id} label (e.g. {missing[0]})"
            )
        self.labels = np.asarray(labels, dtype=np.int64)

    @property
    def image_ids(self) -> list[str]:
        return [record.image_id for record in self.records]

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.records)

    def _render(self, index: int) -> torch.Tensor:
        record = self.records[index]
        image = load_image(record.image_path)
        if isinstance(self.pipeline, FrequencyPipeline):
            return self.pipeline(image, source_id=record.image_id)
        if self.train:
            rng = np.random.default_rng(derive_seed(self.seed, record.image_id, self.epoch))
            return self.pipeline(image, rng)
        return self.pipeline(image)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, int]:
        if self.cache and index in self._cached:
            tensor = self._cached[index]
        else:
            tensor = self._render(index)
            if self.cache:
                self._cached[index] = tensor
        return tensor, int(self.labels[index])


def make_loader(
    dataset: Dataset, batch_size: int, shuffle: bool, seed: int = 42, num_workers: int = 0
) -> DataLoader:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
    )


def dataset_labels(dataset: Dataset) -> np.ndarray:
    """Labels of any (input, label) dataset, without rendering inputs when possible."""
    labels = getattr(dataset, "labels", None)
    if labels is not None:
        return np.asarray(labels, dtype=np.int64)
    tensors = getattr(dataset, "tensors", None)
    if tensors is not None:
        return tensors[1].cpu().numpy().astype(np.int64)
    return np.asarray([int(dataset[i][1]) for i in range(len(dataset))], dtype=np.int64)
