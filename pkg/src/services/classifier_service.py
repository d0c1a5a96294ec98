"""Backbone + MLP head classifier, inference and checkpoint persistence."""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np
import torch
from torch import nn
from ..core.exceptions import DomainMismatchError, MissingCheckpointError
from ..models.record import Domain
from ..models.training import BackboneSpec, TrainingHistory, TrainStage
from .backbone_service import BackboneAdapter, build_backbone

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "uwfscreen-classifier"
CHECKPOINT_VERSION = 1


class ScreeningClassifier(nn.Module):
    """Backbone followed by a one-hidden-layer MLP head emitting class logits."""

    def __init__(
        self,
        backbone: BackboneAdapter,
        hidden_dim: int = 256,
        dropout: float = 0.3,
        num_classes: int = 2,
    ):
        super().__init__()
        self.backbone = backbone
        self.num_classes = num_classes
        self.head = nn.Sequential(
            nn.Linear(backbone.feature_dim, hidden_dim),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden_dim, num_classes),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(images))

    def features(self, images: torch.Tensor) -> torch.Tensor:
        return self.backbone(images)


@dataclass(frozen=True)
class TrainedModel:
    """A classifier plus everything needed to reproduce and audit it.
    Training stages return a new TrainedModel; the network's weights are those of
    the best epoch of the last completed stage."""

    network: ScreeningClassifier
    spec: BackboneSpec
    domain: Domain = Domain.RGB
    seed: int = 42
    task_id: int | None = None
    histories: tuple[TrainingHistory, ...] = ()
    config_snapshot: dict = field(default_factory=dict)

    @property
    def stages_completed(self) -> tuple[TrainStage, ...]:
        return tuple(history.stage for history in self.histories)

    @property
    def history(self) -> TrainingHistory | None:
        return self.histories[-1] if self.histories else None

    @property
    def best_epoch(self) -> int:
        return self.history.best_epoch if self.history else 0

    @property
    def checkpoint_id(self) -> str:
        return checkpoint_name(
            self.task_id, self.domain, self.spec.architecture_id.value, self.seed
        )

    def with_history(self, history: TrainingHistory, **changes) -> "TrainedModel":
        return dataclasses.replace(self, histories=self.histories + (history,), **changes)


def checkpoint_name(task_id: int | None, domain: Domain | str, architecture: str, seed: int) -> str:
    domain_value = domain.value if isinstance(domain, Domain) else domain
    return f"{task_id}_{domain_value}_{architecture}_{seed}"


def build_classifier(
    spec: BackboneSpec,
    num_classes: int = 2,
    seed: int = 42,
    domain: Domain = Domain.RGB,
    task_id: int | None = None,
    load_weights: bool = True,
) -> TrainedModel:
    """Untrained classifier: pretrained (or random) backbone + fresh MLP head."""
    torch.manual_seed(seed)
    backbone = build_backbone(spec, load_weights=load_weights)
    network = ScreeningClassifier(
        backbone,
        hidden_dim=spec.head_hidden_dim,
        dropout=spec.head_dropout,
        num_classes=num_classes,
    )
    return TrainedModel(
        network=network, spec=spec, domain=domain, seed=seed, task_id=task_id
    )


def model_device(network: nn.Module) -> torch.device:
    return next(network.parameters()).device


@torch.no_grad()
def predict_proba(
    model: TrainedModel, images: torch.Tensor, domain: Domain
) -> float | np.ndarray:
    """Positive-class probability for one CHW image (float) or an NCHW batch."""
    if Domain(domain) != model.domain:
        raise DomainMismatchError(
            f"Model was trained on {model.domain.value} inputs, got {Domain(domain).value}"
        )
    single = images.ndim == 3
    batch = images.unsqueeze(0) if single else images
    network = model.network
    network.eval()
    logits = network(batch.to(model_device(network)))
    positive = torch.softmax(logits.double(), dim=1)[:, 1].cpu().numpy()
    return float(positive[0]) if single else positive


@torch.no_grad()
def predict_loader(model: TrainedModel, loader, domain: Domain) -> np.ndarray:
    """Positive-class probabilities for every batch of a loader, in order."""
    scores = [predict_proba(model, images, domain) for images, _ in loader]
    return np.concatenate(scores) if scores else np.zeros(0)


def save_checkpoint(model: TrainedModel, path: Path) -> Path:
    """Self-describing archive with weights, spec, domain, seed, histories and
    config snapshot. A JSON history sidecar is written next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.model_dump(mode="json"),
        "domain": model.domain.value,
        "seed": model.seed,
        "task_id": model.task_id,
        "num_classes": model.network.num_classes,
        "histories": [history.model_dump(mode="json") for history in model.histories],
        "config": model.config_snapshot,
        "state_dict": {k: v.detach().cpu() for k, v in model.network.state_dict().items()},
    }
    torch.save(archive, path)
    history_path = path.with_suffix(".history.json")
    history_path.write_text(
        json.dumps(archive["histories"], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: Path, map_location: str = "cpu") -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"Checkpoint not found: {path}")
    archive = torch.load(path, map_location=map_location, weights_only=False)
    if not isinstance(archive, dict) or archive.get("format") != CHECKPOINT_FORMAT:
        raise MissingCheckpointError(f"{path} is not a classifier checkpoint")

    spec = BackboneSpec.model_validate(archive["spec"])
    model = build_classifier(
        spec,
        num_classes=archive["num_classes"],
        seed=archive["seed"],
        domain=Domain(archive["domain"]),
        task_id=archive["task_id"],
        load_weights=False,
    )
    model.network.load_state_dict(archive["state_dict"])
    return dataclasses.replace(
        model,
        histories=tuple(TrainingHistory.model_validate(h) for h in archive["histories"]),
        config_snapshot=archive["config"],
    )
