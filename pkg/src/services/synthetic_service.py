"""Synthetic fundus dataset generator.
Renders fundus-like discs with vessels, optic disc and macula. Ungradable images
are blurred; RDR images carry scattered bright lesions and DME images lesions
clustered at the macula. Output is deterministic for a seed.
"""

import logging
import math
from pathlib import Path
import cv2
import numpy as np
from ..core.reproducibility import derive_seed
from ..models.record import ImageRecord
from .manifest_service import ManifestService
from .spatial_service import gaussian_blur, save_image

logger = logging.getLogger(__name__)

BACKGROUND_RGB = (0.78, 0.36, 0.16)
VESSEL_RGB = (0.45, 0.08, 0.05)
DISC_RGB = (0.98, 0.86, 0.55)
LESION_RGB = (1.0, 0.95, 0.6)


def _balanced_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.arange(n) % 2
    return rng.permutation(labels)


def render_fundus(
    size: int,
    rng: np.random.Generator,
    blur_sigma: float = 0.0,
    rdr: bool = False,
    dme: bool = False,
) -> np.ndarray:
    """One float RGB image in [0, 1] of shape (size, size, 3)."""
    image = np.zeros((size, size, 3), dtype=np.float32)
    center = np.array([size / 2.0, size / 2.0]) + rng.uniform(-0.03, 0.03, 2) * size
    radius = 0.45 * size

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    distance = np.hypot(xx - center[0], yy - center[1]) / radius
    inside = distance <= 1.0
    shading = np.clip(1.0 - 0.35 * distance**2, 0.0, 1.0)
    for channel, value in enumerate(BACKGROUND_RGB):
        image[..., channel] = np.where(inside, value * shading, 0.0)

    side = 1 if rng.random() < 0.5 else -1
    disc = center + np.array([side * 0.22 * size, rng.uniform(-0.03, 0.03) * size])
    macula = center - np.array([side * 0.08 * size, 0.0])

    thickness = max(1, size // 128)
    for _ in range(6):
        axes = (int(rng.uniform(0.25, 0.4) * size), int(rng.uniform(0.1, 0.3) * size))
        start = rng.uniform(0, 360)
        cv2.ellipse(
            image,
            (int(disc[0]), int(disc[1])),
            axes,
            float(rng.uniform(0, 180)),
            start,
            start + rng.uniform(60, 140),
            VESSEL_RGB,
            thickness,
        )
    cv2.circle(
        image, (int(disc[0]), int(disc[1])), max(2, int(0.06 * size)), DISC_RGB, -1
    )
    macula_mask = np.hypot(xx - macula[0], yy - macula[1]) <= 0.07 * size
    image[macula_mask] *= 0.7

    lesion_radius = max(1, size // 96)
    if rdr:
        for _ in range(int(rng.integers(6, 13))):
            angle, reach = rng.uniform(0, 2 * math.pi), rng.uniform(0.1, 0.85) * radius
            point = center + reach * np.array([math.cos(angle), math.sin(angle)])
            cv2.circle(image, (int(point[0]), int(point[1])), lesion_radius, LESION_RGB, -1)
    if dme:
        for _ in range(int(rng.integers(4, 9))):
            point = macula + rng.normal(0.0, 0.03 * size, 2)
            cv2.circle(image, (int(point[0]), int(point[1])), lesion_radius, LESION_RGB, -1)

    texture = rng.normal(0.0, 0.03, (size, size, 1)).astype(np.float32)
    image = np.where(inside[..., None], image + texture, 0.0)
    if blur_sigma > 0:
        image = gaussian_blur(image, blur_sigma)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def make_synthetic_dataset(
    seed: int = 42,
    n: int = 100,
    image_size: int = 256,
    output_dir: Path = Path("data/synth"),
    blur_sigma_range: tuple[float, float] = (2.0, 4.0),
) -> tuple[Path, list[ImageRecord]]:
    """Write n PNGs and a manifest. Task 1 labels sharp images gradable; tasks 2
    and 3 are labeled on gradable images only."""
    output_dir = Path(output_dir)
    image_dir = output_dir / "images"
    label_rng = np.random.default_rng(derive_seed(seed, "labels"))
    gradable = _balanced_labels(n, label_rng)
    rdr = _balanced_labels(n, label_rng)
    dme = _balanced_labels(n, label_rng)
    scale = image_size / 256.0

    records = []
    for index in range(n):
        image_id = f"synth_{index:04d}"
        rng = np.random.default_rng(derive_seed(seed, image_id))
        blur_sigma = 0.0 if gradable[index] else rng.uniform(*blur_sigma_range) * scale
        image = render_fundus(
            image_size, rng, blur_sigma, rdr=bool(rdr[index]), dme=bool(dme[index])
        )
        path = save_image(image, image_dir / f"{image_id}.png")
        labels = {1: int(gradable[index]), 2: None, 3: None}
        if gradable[index]:
            labels[2], labels[3] = int(rdr[index]), int(dme[index])
        records.append(ImageRecord(image_id=image_id, image_path=path, task_labels=labels))

    manifest = ManifestService.write_manifest(
        records, output_dir / "manifest.csv", relative_to=output_dir
    )
    logger.info("Wrote %d synthetic images and %s", n, manifest)
    return manifest, records
