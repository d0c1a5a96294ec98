"""Spatial (RGB) preprocessing service.
Handles image decoding, retina-centred cropping, resizing, local mean subtraction
and training-time augmentation.
"""

import math
import logging
from pathlib import Path
import cv2
import numpy as np
import torch
from ..core.exceptions import EmptyImageError, ImageDecodeError, ImageTooSmallError
from ..models.preprocessing import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    AugmentationPolicy,
    SpatialConfig,
)

logger = logging.getLogger(__name__)

REC601_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def load_image(path: Path) -> np.ndarray:
    """Decode a PNG/JPEG/TIFF file into a float32 RGB array in [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR | cv2.IMREAD_ANYDEPTH)
    if raw is None or raw.size == 0:
        raise ImageDecodeError(f"Image could not be decoded: {path}")
    scale = float(np.iinfo(raw.dtype).max) if raw.dtype.kind in "ui" else 1.0
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return np.clip(rgb.astype(np.float32) / scale, 0.0, 1.0)


def save_image(image: np.ndarray, path: Path) -> Path:
    """Write a float image in [0, 1] (gray or RGB) as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 3:
        data = cv2.cvtColor(data, cv2.COLOR_RGB2BGR)
    cv2.imwrite(str(path), data)
    return path


def to_gray(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance of an RGB image; single-channel input is returned as is."""
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.shape[2] == 1:
        return image[:, :, 0].astype(np.float64)
    return image[:, :, :3].astype(np.float64) @ REC601_WEIGHTS.astype(np.float64)


def gaussian_kernel_size(sigma: float) -> int:
    return 2 * math.ceil(3.0 * sigma) + 1


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with a 3-sigma kernel and reflect-101 borders."""
    size = gaussian_kernel_size(sigma)
    blurred = cv2.GaussianBlur(
        image.astype(np.float32),
        (size, size),
        sigmaX=sigma,
        sigmaY=sigma,
        borderType=cv2.BORDER_REFLECT_101,
    )
    return blurred.reshape(image.shape)


def retina_centroid(image: np.ndarray, threshold: float = 0.05) -> tuple[float, float]:
    """Intensity centroid (row, col) of pixels brighter than threshold * max.
    Falls back to the geometric centre for an all-black frame."""
    gray = to_gray(image)
    peak = gray.max()
    height, width = gray.shape
    if peak <= 0:
        return (height - 1) / 2.0, (width - 1) / 2.0

    weights = np.where(gray > threshold * peak, gray, 0.0)
    total = weights.sum()
    rows, cols = np.indices(gray.shape)
    return float((rows * weights).sum() / total), float((cols * weights).sum() / total)


def _window_start(center: float, crop_size: int, length: int) -> int:
    start = int(math.floor(center - (crop_size - 1) / 2.0 + 0.5))
    return min(max(start, 0), length - crop_size)


def crop_center(
    image: np.ndarray,
    crop_size: int = 800,
    threshold: float = 0.05,
    pad_small_images: bool = False,
) -> np.ndarray:
    """Crop a crop_size square centred on the retina, clamped inside the frame."""
    if image.size == 0:
        raise EmptyImageError()
    height, width = image.shape[:2]

    if height < crop_size or width < crop_size:
        if not pad_small_images:
            raise ImageTooSmallError(
                f"Image of {height}x{width} is smaller than crop {crop_size}. "
                "Set spatial.pad_small_images = true to pad before cropping."
            )
        pad_h, pad_w = max(crop_size - height, 0), max(crop_size - width, 0)
        padding = [(pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)]
        padding += [(0, 0)] * (image.ndim - 2)
        image = np.pad(image, padding, mode="constant")
        height, width = image.shape[:2]

    center_row, center_col = retina_centroid(image, threshold)
    top = _window_start(center_row, crop_size, height)
    left = _window_start(center_col, crop_size, width)
    return image[top : top + crop_size, left : left + crop_size].copy()


def resize(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image
    shrinking = image.shape[0] > size
    interpolation = cv2.INTER_AREA if shrinking else cv2.INTER_LINEAR
    resized = cv2.resize(image, (size, size), interpolation=interpolation)
    if image.ndim == 3 and resized.ndim == 2:
        resized = resized[:, :, None]
    return resized


def local_mean_subtract(
    image: np.ndarray,
    blur_scale: float = 1.0 / 30.0,
    neutral_offset: float = 0.5,
    gain: float = 1.0,
) -> np.ndarray:
    """Subtract the local mean colour and re-centre on a neutral grey.
    out = clamp(gain * (image - blur(image, sigma=blur_scale*width)) + neutral_offset)
    """
    if blur_scale <= 0:
        raise ValueError("blur_scale must be positive")
    if image.size == 0:
        raise EmptyImageError()
    sigma = blur_scale * image.shape[1]
    image = image.astype(np.float32)
    local_mean = gaussian_blur(image, sigma)
    return np.clip(gain * (image - local_mean) + neutral_offset, 0.0, 1.0)


def augment(
    image: np.ndarray, rng: np.random.Generator, policy: AugmentationPolicy
) -> np.ndarray:
    """Random flips, rotation and zoom drawn from rng; output keeps the input size.
    All four draws are made on every call so replaying rng replays the transform."""
    do_hflip = rng.random() < policy.hflip_prob
    do_vflip = rng.random() < policy.vflip_prob
    angle = rng.uniform(-policy.rotation_degrees_max, policy.rotation_degrees_max)
    zoom = rng.uniform(*policy.zoom_range)

    out = image
    if do_hflip:
        out = out[:, ::-1]
    if do_vflip:
        out = out[::-1]
    out = np.ascontiguousarray(out)

    if angle != 0.0 or zoom != 1.0:
        height, width = out.shape[:2]
        matrix = cv2.getRotationMatrix2D(
            ((width - 1) / 2.0, (height - 1) / 2.0), angle, zoom
        )
        warped = cv2.warpAffine(
            out,
            matrix,
            (width, height),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_REFLECT_101,
        )
        out = warped.reshape(out.shape)
    return out


def to_tensor(image: np.ndarray, imagenet_normalize: bool = True) -> torch.Tensor:
    """HWC float image in [0, 1] to a CHW float32 tensor."""
    tensor = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    if tensor.ndim == 2:
        tensor = tensor.unsqueeze(-1)
    tensor = tensor.permute(2, 0, 1).contiguous()
    if imagenet_normalize and tensor.shape[0] == 3:
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        tensor = (tensor - mean) / std
    return tensor


class SpatialPipeline:
    """RGB-domain input pipeline: crop, resize, normalize, (train) augment, tensor."""

    def __init__(self, config: SpatialConfig, output_size: int):
        self.config = config
        self.output_size = output_size

    def prepare(self, image: np.ndarray) -> np.ndarray:
        """Deterministic stages shared by every split."""
        cropped = crop_center(
            image,
            self.config.crop_size,
            self.config.foreground_threshold,
            self.config.pad_small_images,
        )
        resized = resize(cropped, self.output_size)
        norm = self.config.normalization
        return local_mean_subtract(
            resized, norm.blur_scale, norm.neutral_offset, norm.gain
        )

    def __call__(
        self, image: np.ndarray, rng: np.random.Generator | None = None
    ) -> torch.Tensor:
        prepared = self.prepare(image)
        if rng is not None:
            prepared = augment(prepared, rng, self.config.augmentation)
        return to_tensor(prepared)

    def dump_stages(self, image: np.ndarray, directory: Path, stem: str) -> list[Path]:
        """Write a PNG per preprocessing stage for visual inspection."""
        cropped = crop_center(
            image,
            self.config.crop_size,
            self.config.foreground_threshold,
            self.config.pad_small_images,
        )
        resized = resize(cropped, self.output_size)
        norm = self.config.normalization
        normalized = local_mean_subtract(
            resized, norm.blur_scale, norm.neutral_offset, norm.gain
        )
        stages = {"0_source": image, "1_crop": cropped, "2_resize": resized}
        stages["3_local_mean"] = normalized
        written = [
            save_image(stage, Path(directory) / f"{stem}_{name}.png")
            for name, stage in stages.items()
        ]
        logger.debug("Dumped %d preprocessing stages for %s", len(written), stem)
        return written
