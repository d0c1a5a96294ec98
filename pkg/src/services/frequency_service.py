"""Frequency-domain preprocessing service.
Computes the centred 2D DFT magnitude, clips it at a per-image percentile and
turns it into a backbone-ready three-channel image.
"""

from pathlib import Path
import numpy as np
import torch
from ..core.exceptions import EmptyImageError
from ..models.preprocessing import FrequencyConfig, SpatialConfig, SpectralImage
from .spatial_service import crop_center, resize, save_image, to_gray, to_tensor


def dft_magnitude(gray_image: np.ndarray, source_id: str | None = None) -> SpectralImage:
    """|DFT| of a single-channel image, unnormalized forward transform,
    zero frequency shifted to the grid centre."""
    if gray_image.size == 0:
        raise EmptyImageError("Cannot transform an empty image.")
    if gray_image.ndim != 2:
        raise ValueError("dft_magnitude expects a single-channel 2D image")
    spectrum = np.fft.fftshift(np.fft.fft2(gray_image.astype(np.float64)))
    return SpectralImage(magnitude=np.abs(spectrum), source_id=source_id)


def clip_at_percentile(spectrum: SpectralImage, p: float = 0.99) -> SpectralImage:
    """Cap values above the p-quantile of the spectrum itself.
    The quantile is the order statistic at ceil(p * (n - 1)) of the sorted values,
    which makes clipping idempotent."""
    if not 0 < p <= 1:
        raise ValueError("Percentile must be in (0, 1]")
    ceiling = np.quantile(spectrum.magnitude, p, method="higher")
    return SpectralImage(
        magnitude=np.minimum(spectrum.magnitude, ceiling),
        clip_percentile=p,
        source_id=spectrum.source_id,
    )


def min_max_normalize(spectrum: SpectralImage) -> SpectralImage:
    """Scale into [0, 1]; a flat spectrum maps to all zeros."""
    magnitude = spectrum.magnitude
    low, high = magnitude.min(), magnitude.max()
    if high > low:
        scaled = (magnitude - low) / (high - low)
    else:
        scaled = np.zeros_like(magnitude)
    return SpectralImage(
        magnitude=scaled,
        clip_percentile=spectrum.clip_percentile,
        source_id=spectrum.source_id,
        normalized=True,
    )


def normalized_spectrum(
    color_image: np.ndarray, clip_percentile: float = 0.99, source_id: str | None = None
) -> SpectralImage:
    """Luminance -> DFT magnitude -> percentile clip -> min-max normalization."""
    spectrum = dft_magnitude(to_gray(color_image), source_id)
    return min_max_normalize(clip_at_percentile(spectrum, clip_percentile))


def frequency_representation(
    color_image: np.ndarray,
    config: FrequencyConfig,
    output_size: int,
    source_id: str | None = None,
) -> np.ndarray:
    """Backbone-ready HWC float image: normalized clipped spectrum, resized and
    replicated to config.channels."""
    spectrum = normalized_spectrum(color_image, config.clip_percentile, source_id)
    resized = resize(spectrum.magnitude.astype(np.float32), output_size)
    if resized.ndim == 3:
        resized = resized[:, :, 0]
    return np.repeat(resized[:, :, None], config.channels, axis=2)


def low_frequency_energy_fraction(
    spectrum: SpectralImage, radius_fraction: float = 0.1
) -> float:
    """Share of squared magnitude inside the central disc of radius
    radius_fraction * half-width."""
    energy = spectrum.magnitude.astype(np.float64) ** 2
    height, width = energy.shape
    rows, cols = np.indices(energy.shape)
    distance = np.hypot(rows - height // 2, cols - width // 2)
    radius = radius_fraction * (min(height, width) / 2.0)
    total = energy.sum()
    if total == 0:
        return 0.0
    return float(energy[distance <= radius].sum() / total)


class FrequencyPipeline:
    """Frequency-domain input pipeline applied to the retina-centred crop."""

    def __init__(
        self,
        spatial_config: SpatialConfig,
        frequency_config: FrequencyConfig,
        output_size: int,
    ):
        self.spatial_config = spatial_config
        self.config = frequency_config
        self.output_size = output_size

    def prepare(self, image: np.ndarray, source_id: str | None = None) -> np.ndarray:
        cropped = crop_center(
            image,
            self.spatial_config.crop_size,
            self.spatial_config.foreground_threshold,
            self.spatial_config.pad_small_images,
        )
        return frequency_representation(
            cropped, self.config, self.output_size, source_id
        )

    def __call__(
        self,
        image: np.ndarray,
        rng: np.random.Generator | None = None,
        source_id: str | None = None,
    ) -> torch.Tensor:
        # no augmentation in the frequency domain
        del rng
        return to_tensor(self.prepare(image, source_id), imagenet_normalize=False)

    def dump_spectrum(self, image: np.ndarray, path: Path) -> Path:
        """Render the clipped, normalized spectrum of the crop as a PNG."""
        cropped = crop_center(
            image,
            self.spatial_config.crop_size,
            self.spatial_config.foreground_threshold,
            self.spatial_config.pad_small_images,
        )
        spectrum = normalized_spectrum(cropped, self.config.clip_percentile)
        return save_image(spectrum.magnitude, path)
