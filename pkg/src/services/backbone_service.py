"""Backbone construction service.
Builds the four backbone families (torchvision CNNs, timm vision transformers and
the retinal foundation encoder) behind one adapter that emits pooled features.
"""

import logging
from collections import OrderedDict
from pathlib import Path
import timm
import torch
from torch import nn
from torchvision import models as tv_models
from timm.layers import resample_abs_pos_embed
from ..core.config import apply_cache_dir
from ..core.exceptions import MissingFoundationCheckpointError, UnknownArchitectureError
from ..models.training import ArchitectureId, BackboneSpec, PretrainedSource

logger = logging.getLogger(__name__)


class BackboneAdapter(nn.Module):
    """Pretrained body emitting one pooled pre-head vector per image.
    Also exposes the layer used for Grad-CAM and, for transformers, the number of
    prefix (class / register) tokens to drop from its output."""

    def __init__(
        self,
        body: nn.Module,
        feature_dim: int,
        explanation_layer: nn.Module,
        explanation_layer_name: str,
        num_prefix_tokens: int | None = None,
        feature_layer_name: str = "pooled",
    ):
        super().__init__()
        self.body = body
        self.feature_dim = feature_dim
        self.explanation_layer_name = explanation_layer_name
        self.feature_layer_name = feature_layer_name
        self.num_prefix_tokens = num_prefix_tokens
        # plain attribute: the layer is already registered through self.body
        object.__setattr__(self, "explanation_layer", explanation_layer)

    @property
    def is_transformer(self) -> bool:
        return self.num_prefix_tokens is not None

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.body(images)


def _lightweight_cnn(spec: BackboneSpec, pretrained: bool) -> BackboneAdapter:
    weights = tv_models.MobileNet_V2_Weights.IMAGENET1K_V1 if pretrained else None
    network = tv_models.mobilenet_v2(weights=weights)
    body = nn.Sequential(
        OrderedDict(
            features=network.features,
            pool=nn.AdaptiveAvgPool2d(1),
            flatten=nn.Flatten(),
        )
    )
    last = len(network.features) - 1
    return BackboneAdapter(
        body,
        network.last_channel,
        network.features[last],
        f"features.{last}",
        feature_layer_name="features.pool",
    )


def _residual_cnn(spec: BackboneSpec, pretrained: bool) -> BackboneAdapter:
    weights = tv_models.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
    network = tv_models.resnet18(weights=weights)
    feature_dim = network.fc.in_features
    network.fc = nn.Identity()
    return BackboneAdapter(
        network, feature_dim, network.layer4, "layer4", feature_layer_name="avgpool"
    )


def _vision_transformer(
    spec: BackboneSpec, pretrained: bool, global_pool: str = "token"
) -> BackboneAdapter:
    network = timm.create_model(
        spec.encoder,
        pretrained=pretrained,
        num_classes=0,
        img_size=spec.input_size,
        global_pool=global_pool,
    )
    last = len(network.blocks) - 1
    return BackboneAdapter(
        network,
        network.num_features,
        network.blocks[last].norm1,
        f"blocks.{last}.norm1",
        num_prefix_tokens=network.num_prefix_tokens,
        feature_layer_name=f"pre_logits.{global_pool}",
    )


def load_foundation_weights(network: nn.Module, checkpoint_path: Path) -> None:
    """Load a masked-autoencoder encoder checkpoint into a timm ViT.
    Head weights are dropped and the position embedding is resampled to the
    model's patch grid."""
    checkpoint = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    state = checkpoint.get("model", checkpoint) if isinstance(checkpoint, dict) else checkpoint
    state = {k: v for k, v in state.items() if not k.startswith("head.")}

    if "pos_embed" in state and state["pos_embed"].shape != network.pos_embed.shape:
        state["pos_embed"] = resample_abs_pos_embed(
            state["pos_embed"],
            new_size=list(network.patch_embed.grid_size),
            num_prefix_tokens=network.num_prefix_tokens,
        )

    result = network.load_state_dict(state, strict=False)
    if result.missing_keys:
        logger.warning("Foundation checkpoint missing keys: %s", result.missing_keys[:5])
    if result.unexpected_keys:
        logger.warning(
            "Foundation checkpoint unexpected keys: %s", result.unexpected_keys[:5]
        )
    logger.info("Loaded foundation encoder weights from %s", checkpoint_path)


def _retinal_foundation(
    spec: BackboneSpec, pretrained: bool, load_weights: bool = True
) -> BackboneAdapter:
    if not load_weights:
        return _vision_transformer(spec, pretrained=False, global_pool="avg")
    if spec.checkpoint_path is None:
        raise MissingFoundationCheckpointError()
    if not Path(spec.checkpoint_path).is_file():
        raise MissingFoundationCheckpointError(
            f"Foundation encoder checkpoint not found: {spec.checkpoint_path}"
        )
    adapter = _vision_transformer(spec, pretrained=False, global_pool="avg")
    load_foundation_weights(adapter.body, Path(spec.checkpoint_path))
    return adapter


BUILDERS = {
    ArchitectureId.LIGHTWEIGHT_CNN: _lightweight_cnn,
    ArchitectureId.RESIDUAL_CNN: _residual_cnn,
    ArchitectureId.PATCH_TRANSFORMER: _vision_transformer,
    ArchitectureId.RETINAL_FOUNDATION: _retinal_foundation,
}


def build_backbone(spec: BackboneSpec, load_weights: bool = True) -> BackboneAdapter:
    """Build the backbone named by spec.architecture_id.
    With load_weights=False only the architecture is built, for restoring a
    saved checkpoint over it."""
    builder = BUILDERS.get(spec.architecture_id)
    if builder is None:
        raise UnknownArchitectureError(
            f"Unknown architecture id: {spec.architecture_id}"
        )
    pretrained = load_weights and spec.pretrained_source == PretrainedSource.GENERIC_IMAGES
    if pretrained:
        apply_cache_dir()
    if spec.architecture_id == ArchitectureId.RETINAL_FOUNDATION:
        adapter = _retinal_foundation(spec, pretrained, load_weights=load_weights)
    else:
        adapter = builder(spec, pretrained)
    logger.info(
        "Built %s backbone (%s, %d features, pretrained=%s)",
        spec.architecture_id.value,
        spec.encoder,
        adapter.feature_dim,
        spec.pretrained_source.value,
    )
    return adapter


def deepest_parameters(
    backbone: nn.Module, fraction: float
) -> list[tuple[str, nn.Parameter]]:
    """The deepest parameters (by registration order) covering `fraction` of the
    backbone's parameter count, with single-tensor granularity."""
    named = list(backbone.named_parameters())
    total = sum(param.numel() for _, param in named)
    target = fraction * total
    selected: list[tuple[str, nn.Parameter]] = []
    covered = 0
    for name, param in reversed(named):
        if covered >= target:
            break
        selected.append((name, param))
        covered += param.numel()
    return list(reversed(selected))
