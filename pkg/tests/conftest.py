"""Pytest fixtures for testing the UWF screening pipeline."""

import numpy as np
import pytest
import timm
import torch
from torch.utils.data import TensorDataset
from src.models.preprocessing import AugmentationPolicy, SpatialConfig
from src.models.record import ImageRecord
from src.models.training import ArchitectureId, BackboneSpec, PretrainedSource
from src.services.synthetic_service import make_synthetic_dataset, render_fundus

TINY_INPUT = 64
TINY_VIT = "vit_tiny_patch16_224"


def planted_images(n: int, size: int = TINY_INPUT, seed: int = 0):
    """Class 1 has a bright square in the left half, class 0 in the right half."""
    generator = torch.Generator().manual_seed(seed)
    images = 0.05 * torch.rand(n, 3, size, size, generator=generator)
    labels = torch.arange(n) % 2
    patch = size // 4
    for index in range(n):
        top = int(torch.randint(0, size - patch, (1,), generator=generator))
        left = int(torch.randint(0, size // 2 - patch, (1,), generator=generator))
        if labels[index] == 0:
            left += size // 2
        images[index, :, top : top + patch, left : left + patch] = 1.0
    return images, labels


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def fundus_image(rng):
    return render_fundus(128, rng)


@pytest.fixture
def tiny_spec():
    """Factory for random-init backbone specs at 64x64 input."""

    def factory(architecture: ArchitectureId, **overrides) -> BackboneSpec:
        values = {
            "architecture_id": architecture,
            "pretrained_source": PretrainedSource.NONE,
            "input_size": TINY_INPUT,
        }
        if architecture in (
            ArchitectureId.PATCH_TRANSFORMER,
            ArchitectureId.RETINAL_FOUNDATION,
        ):
            values["encoder_name"] = TINY_VIT
        values.update(overrides)
        return BackboneSpec(**values)

    return factory


@pytest.fixture
def foundation_checkpoint(tmp_path):
    """Encoder checkpoint at 224 input (pos_embed gets resampled) with a head to drop."""
    network = timm.create_model(TINY_VIT, pretrained=False, num_classes=5)
    path = tmp_path / "foundation.pth"
    torch.save({"model": network.state_dict()}, path)
    return path


@pytest.fixture
def planted_dataset():
    images, labels = planted_images(16)
    return TensorDataset(images, labels)


@pytest.fixture
def planted_val_dataset():
    images, labels = planted_images(8, seed=1)
    return TensorDataset(images, labels)


@pytest.fixture
def tiny_spatial_config():
    return SpatialConfig(crop_size=64, augmentation=AugmentationPolicy.identity())


@pytest.fixture
def synthetic_manifest(tmp_path):
    manifest, _ = make_synthetic_dataset(
        seed=0, n=24, image_size=64, output_dir=tmp_path / "synth"
    )
    return manifest


@pytest.fixture
def make_records(tmp_path):
    """Factory for records with task-1 labels (negatives first) and fake paths."""

    def factory(negatives: int, positives: int) -> list[ImageRecord]:
        labels = [0] * negatives + [1] * positives
        return [
            ImageRecord(
                image_id=f"img_{index:04d}",
                image_path=tmp_path / f"img_{index:04d}.png",
                task_labels={1: label},
            )
            for index, label in enumerate(labels)
        ]

    return factory


@pytest.fixture
def run_config_file(tmp_path, synthetic_manifest):
    """TOML run config for a two-architecture desk-scale run on the synthetic set."""
    path = tmp_path / "run.toml"
    path.write_text(
        f"""
[run]
manifest = "{synthetic_manifest.as_posix()}"
task_id = 1
domain = "rgb"
architectures = ["lightweight_cnn", "residual_cnn"]
seed = 7
output_dir = "{(tmp_path / 'runs').as_posix()}"
input_size = 64

[spatial]
crop_size = 64

[training]
batch_size = 8
max_epochs = 2
early_stop_patience = 2
learning_rate = 0.001

[backbones.lightweight_cnn]
pretrained_source = "none"

[backbones.residual_cnn]
pretrained_source = "none"

[explain]
max_images = 2
""",
        encoding="utf-8",
    )
    return path
