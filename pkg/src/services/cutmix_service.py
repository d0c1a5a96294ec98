"""CutMix augmentation with exact area-weighted soft labels."""

import math
import numpy as np
import torch
import torch.nn.functional as F


def sample_box(
    height: int, width: int, lam: float, rng: np.random.Generator
) -> tuple[int, int, int, int]:
    """(top, left, box_height, box_width) of relative area ~(1 - lam).
    The box is placed fully inside the image so its area is never clipped."""
    ratio = math.sqrt(max(0.0, 1.0 - lam))
    box_height = int(round(height * ratio))
    box_width = int(round(width * ratio))
    top = int(rng.integers(0, height - box_height + 1))
    left = int(rng.integers(0, width - box_width + 1))
    return top, left, box_height, box_width


def as_soft_labels(labels: torch.Tensor, num_classes: int = 2) -> torch.Tensor:
    if labels.ndim == 1:
        return F.one_hot(labels.long(), num_classes).float()
    return labels.float()


def cutmix(
    images: torch.Tensor,
    labels: torch.Tensor,
    alpha: float,
    rng: np.random.Generator,
    lam: float | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Paste a box from a partner image into every image of the batch.
    lam ~ Beta(alpha, alpha) unless forced. Partners are the batch rolled by a
    random non-zero shift, so no image is paired with itself. Label weights are
    recomputed from the realized box area."""
    batch_size = images.shape[0]
    if batch_size < 2:
        raise ValueError("CutMix needs a batch of at least two images")
    if alpha <= 0:
        raise ValueError("CutMix alpha must be positive")

    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    shift = int(rng.integers(1, batch_size))
    partner = torch.roll(torch.arange(batch_size), shifts=-shift)

    height, width = images.shape[-2:]
    top, left, box_height, box_width = sample_box(height, width, lam, rng)

    mixed = images.clone()
    mixed[..., top : top + box_height, left : left + box_width] = images[
        partner, ..., top : top + box_height, left : left + box_width
    ]
    lam_adjusted = 1.0 - (box_height * box_width) / float(height * width)

    soft = as_soft_labels(labels)
    mixed_labels = lam_adjusted * soft + (1.0 - lam_adjusted) * soft[partner]
    return mixed, mixed_labels
