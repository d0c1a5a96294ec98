"""Grad-CAM explanation service.
Computes class activation heatmaps for CNN stages and transformer patch-token
grids, renders overlays and writes the panel / JSON / HTML report.
"""

import html
import json
import logging
import math
from pathlib import Path
from typing import Sequence
import cv2
import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from ..core.exceptions import LayerWithoutSpatialStructureError, NonSquareTokenGridError
from ..models.explanation import Heatmap
from ..models.record import TASK_DEFINITIONS
from .classifier_service import TrainedModel, model_device
from .spatial_service import save_image

logger = logging.getLogger(__name__)


def capture_layer(
    network: nn.Module, layer: nn.Module, image: torch.Tensor, target_class: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Activations of `layer` and gradients of the target-class logit w.r.t. them."""
    store: dict[str, torch.Tensor] = {}

    def hook(_module, _inputs, output):
        store["activations"] = output
        output.register_hook(lambda grad: store.__setitem__("gradients", grad))

    handle = layer.register_forward_hook(hook)
    network.eval()
    try:
        with torch.enable_grad():
            inputs = image.unsqueeze(0).to(model_device(network)).requires_grad_(True)
            logits = network(inputs)
            logits[0, target_class].backward()
    finally:
        handle.remove()
        network.zero_grad(set_to_none=True)
    return store["activations"].detach()[0], store["gradients"].detach()[0]


def compute_cam(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """ReLU of the activation channels weighted by their spatially averaged gradients.
    Both inputs are (channels, height, width)."""
    weights = gradients.mean(axis=(1, 2))
    return np.maximum(np.tensordot(weights, activations, axes=1), 0.0)


def upsample(cam: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    tensor = torch.as_tensor(cam, dtype=torch.float64)[None, None]
    resized = F.interpolate(tensor, size=size, mode="bilinear", align_corners=False)
    return resized[0, 0].numpy()


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; an identically zero map stays zero, a flat positive map is 1."""
    low, high = float(values.min()), float(values.max())
    if high <= 0.0:
        return np.zeros_like(values)
    if high - low <= 0.0:
        return np.ones_like(values)
    return (values - low) / (high - low)


def _heatmap(
    cam: np.ndarray, image: torch.Tensor, target_class: int, layer_name: str, image_id
) -> Heatmap:
    values = normalize_map(np.clip(upsample(cam, tuple(image.shape[-2:])), 0.0, None))
    return Heatmap(
        values=values,
        target_class=target_class,
        layer_name=layer_name,
        image_id=image_id,
        grid_shape=(int(cam.shape[0]), int(cam.shape[1])),
    )


def gradcam_layer(
    network: nn.Module,
    layer: nn.Module,
    image: torch.Tensor,
    target_class: int = 1,
    layer_name: str = "",
    image_id: str | None = None,
) -> Heatmap:
    """Grad-CAM on a layer emitting (channels, height, width) maps."""
    activations, gradients = capture_layer(network, layer, image, target_class)
    if activations.ndim != 3:
        raise LayerWithoutSpatialStructureError(
            f"Layer {layer_name or type(layer).__name__} emits shape "
            f"{tuple(activations.shape)}, not a (C, H, W) map"
        )
    cam = compute_cam(activations.double().cpu().numpy(), gradients.double().cpu().numpy())
    return _heatmap(cam, image, target_class, layer_name, image_id)


def gradcam(
    model: TrainedModel, image: torch.Tensor, target_class: int = 1, image_id: str | None = None
) -> Heatmap:
    """Grad-CAM at the CNN backbone's last spatial stage."""
    backbone = model.network.backbone
    return gradcam_layer(
        model.network,
        backbone.explanation_layer,
        image,
        target_class,
        f"backbone.body.{backbone.explanation_layer_name}",
        image_id,
    )


def tokens_to_grid(tokens: torch.Tensor, num_prefix_tokens: int) -> torch.Tensor:
    """(tokens, channels) -> (channels, P, P) after dropping prefix tokens."""
    patches = tokens[num_prefix_tokens:]
    count = patches.shape[0]
    side = math.isqrt(count)
    if side * side != count:
        raise NonSquareTokenGridError(
            f"{count} patch tokens cannot form a square grid"
        )
    return patches.reshape(side, side, -1).permute(2, 0, 1)


def gradcam_transformer(
    model: TrainedModel, image: torch.Tensor, target_class: int = 1, image_id: str | None = None
) -> Heatmap:
    """Grad-CAM over the patch-token grid of the last encoder block."""
    backbone = model.network.backbone
    if not backbone.is_transformer:
        raise LayerWithoutSpatialStructureError(
            f"{model.spec.architecture_id.value} has no patch-token grid"
        )
    activations, gradients = capture_layer(
        model.network, backbone.explanation_layer, image, target_class
    )
    if activations.ndim != 2:
        raise LayerWithoutSpatialStructureError(
            f"Token layer emits shape {tuple(activations.shape)}, not (tokens, channels)"
        )
    prefix = backbone.num_prefix_tokens or 0
    cam = compute_cam(
        tokens_to_grid(activations, prefix).double().cpu().numpy(),
        tokens_to_grid(gradients, prefix).double().cpu().numpy(),
    )
    return _heatmap(
        cam, image, target_class, f"backbone.body.{backbone.explanation_layer_name}", image_id
    )


def explain_image(
    model: TrainedModel, image: torch.Tensor, target_class: int = 1, image_id: str | None = None
) -> Heatmap:
    if model.network.backbone.is_transformer:
        return gradcam_transformer(model, image, target_class, image_id)
    return gradcam(model, image, target_class, image_id)


def colorize(values: np.ndarray, colormap: str = "viridis") -> np.ndarray:
    return matplotlib.colormaps[colormap](values)[..., :3].astype(np.float64)


def overlay(
    image: np.ndarray, heatmap: Heatmap | np.ndarray, colormap: str = "viridis", alpha: float = 0.4
) -> np.ndarray:
    """Alpha-blend the colorized heatmap over an RGB image in [0, 1] at the
    image's own resolution."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    values = heatmap.values if isinstance(heatmap, Heatmap) else heatmap
    base = image.astype(np.float64)
    if base.ndim == 2:
        base = np.repeat(base[:, :, None], 3, axis=2)
    height, width = base.shape[:2]
    if values.shape != (height, width):
        values = cv2.resize(values, (width, height), interpolation=cv2.INTER_LINEAR)
    colored = colorize(np.clip(values, 0.0, 1.0), colormap)
    return (1.0 - alpha) * base + alpha * colored


def render_panel(image: np.ndarray, blended: np.ndarray) -> np.ndarray:
    """Side-by-side (original | overlay)."""
    base = image if image.ndim == 3 else np.repeat(image[:, :, None], 3, axis=2)
    return np.concatenate([base.astype(np.float64), blended], axis=1)


def heatmap_summary(heatmap: Heatmap, score: float | None = None) -> dict:
    return {
        "image_id": heatmap.image_id,
        "target_class": heatmap.target_class,
        "layer": heatmap.layer_name,
        "grid_shape": list(heatmap.grid_shape) if heatmap.grid_shape else None,
        "input_shape": list(heatmap.values.shape),
        "peak": list(heatmap.peak()),
        "mass_quantiles": heatmap.mass_quantiles(),
        "left_mass_fraction": heatmap.left_mass_fraction(),
        "score": score,
    }


def write_panel(
    image: np.ndarray,
    heatmap: Heatmap,
    directory: Path,
    stem: str,
    colormap: str = "viridis",
    alpha: float = 0.4,
    score: float | None = None,
) -> tuple[Path, Path]:
    """Write `{stem}.png` (original | overlay) and `{stem}.json` sidecar."""
    directory = Path(directory)
    panel = render_panel(image, overlay(image, heatmap, colormap, alpha))
    png_path = save_image(panel, directory / f"{stem}.png")
    json_path = directory / f"{stem}.json"
    json_path.write_text(
        json.dumps(heatmap_summary(heatmap, score), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return png_path, json_path


def write_html_report(entries: Sequence[dict], path: Path) -> Path:
    """Index page grouping panels by task. Each entry carries task_id, image_id,
    model, panel (path relative to the report) and score."""
    path = Path(path)
    sections = []
    for task_id in sorted({entry["task_id"] for entry in entries}):
        task = TASK_DEFINITIONS[task_id]
        figures = []
        for entry in (e for e in entries if e["task_id"] == task_id):
            score = entry.get("score")
            caption = f"{entry['image_id']} | {entry['model']}"
            if score is not None:
                caption += f" | p({task.positive_class_name}) = {score:.3f}"
            figures.append(
                f'<figure><img src="{html.escape(str(entry["panel"]))}" width="512">'
                f"<figcaption>{html.escape(caption)}</figcaption></figure>"
            )
        sections.append(
            f"<h2>Task {task_id}: {html.escape(task.negative_class_name)} vs "
            f"{html.escape(task.positive_class_name)}</h2>\n" + "\n".join(figures)
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        "<title>Grad-CAM report</title></head><body>\n"
        + "\n".join(sections)
        + "\n</body></html>\n",
        encoding="utf-8",
    )
    logger.info("Wrote explanation report %s (%d panels)", path, len(entries))
    return path
