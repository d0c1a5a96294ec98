"""Training service.
Implements the soft-label cross-entropy, AUROC early stopping and the three
training protocols: head-only, partial fine-tuning and foundation adaptation.
"""

import logging
from typing import Sequence
import numpy as np
import torch
from torch import nn
from torch.utils.data import Dataset
from tqdm import tqdm
from ..core.config import settings
from ..core.exceptions import (
    EmptyDatasetError,
    SingleClassError,
    StageOrderError,
    TrainingDivergenceError,
)
from ..core.reproducibility import derive_seed, seed_everything, state_hash
from ..models.evaluation import ScoredSet
from ..models.training import EpochRecord, TrainConfig, TrainingHistory, TrainStage
from .backbone_service import deepest_parameters
from .classifier_service import TrainedModel
from .cutmix_service import as_soft_labels, cutmix
from .dataset_service import dataset_labels, make_loader
from .metrics_service import auroc

logger = logging.getLogger(__name__)

NamedParameters = Sequence[tuple[str, nn.Parameter]]


def cross_entropy(
    probs: torch.Tensor,
    soft_labels: torch.Tensor,
    eps: float = 1e-7,
    class_weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean over the batch of -sum(label * log(prob + eps))."""
    terms = soft_labels * torch.log(probs + eps)
    if class_weights is not None:
        terms = terms * class_weights.to(terms.dtype)
    return -terms.sum(dim=1).mean()


def balanced_class_weights(labels: np.ndarray, num_classes: int = 2) -> torch.Tensor:
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    weights = len(labels) / (num_classes * np.maximum(counts, 1.0))
    return torch.tensor(weights, dtype=torch.float32)


class EarlyStopping:
    """Tracks the best (maximized) monitored value and the epochs since it improved."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_value = float("-inf")
        self.best_epoch = 0
        self.epochs_without_improvement = 0

    def step(self, epoch: int, value: float) -> bool:
        """Record an epoch; returns True when it is the new best."""
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.epochs_without_improvement = 0
            return True
        self.epochs_without_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_without_improvement >= self.patience


class Trainer:
    """Trains the given parameters of a logits network with AdamW.
    Every other parameter is frozen, and modules whose parameters are all frozen
    run in eval mode so their normalization statistics stay fixed too."""

    def __init__(
        self,
        network: nn.Module,
        config: TrainConfig,
        trainable: NamedParameters,
        device: str | None = None,
    ):
        self.network = network
        self.config = config
        self.trainable = list(trainable)
        self.device = torch.device(device or settings.UWF_DEVICE)

    def _freeze(self) -> None:
        for param in self.network.parameters():
            param.requires_grad_(False)
        for _, param in self.trainable:
            param.requires_grad_(True)

    def _set_train_mode(self) -> None:
        self.network.train()
        for module in self.network.modules():
            params = list(module.parameters())
            if params and not any(param.requires_grad for param in params):
                module.eval()

    def trainable_hash(self) -> str:
        return state_hash(self.trainable)

    @torch.no_grad()
    def predict(self, loader) -> tuple[np.ndarray, np.ndarray]:
        self.network.eval()
        scores, labels = [], []
        for images, targets in loader:
            logits = self.network(images.to(self.device))
            scores.append(torch.softmax(logits.double(), dim=1)[:, 1].cpu().numpy())
            labels.append(np.asarray(targets))
        return np.concatenate(scores), np.concatenate(labels)

    def evaluate_auroc(self, loader) -> float:
        scores, labels = self.predict(loader)
        return auroc(ScoredSet.from_arrays(scores, labels))

    def _train_epoch(self, loader, optimizer, epoch: int, class_weights) -> float:
        self._set_train_mode()
        rng = np.random.default_rng(derive_seed(self.config.seed, "cutmix", epoch))
        total_loss, total_count = 0.0, 0
        show_progress = logger.isEnabledFor(logging.INFO)
        for images, targets in tqdm(
            loader, desc=f"epoch {epoch}", leave=False, disable=None if show_progress else True
        ):
            images = images.to(self.device)
            soft_labels = as_soft_labels(targets.to(self.device))
            if self.config.cutmix_enabled and images.shape[0] >= 2:
                images, soft_labels = cutmix(
                    images, soft_labels, self.config.cutmix_alpha, rng
                )
            probs = torch.softmax(self.network(images), dim=1)
            loss = cross_entropy(probs, soft_labels, self.config.log_epsilon, class_weights)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"Non-finite training loss at epoch {epoch} ({self.config.stage.value})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.item()) * images.shape[0]
            total_count += images.shape[0]
        return total_loss / total_count

    def fit(self, train_data: Dataset, val_data: Dataset) -> TrainingHistory:
        """Train until early stopping; the network ends at its best-AUROC epoch."""
        if len(train_data) == 0:
            raise EmptyDatasetError()
        val_labels = dataset_labels(val_data)
        if len(np.unique(val_labels)) < 2:
            raise SingleClassError(
                f"Validation set has {len(val_labels)} samples of a single class; "
                "validation AUROC is undefined"
            )

        seed_everything(self.config.seed)
        self.network.to(self.device)
        self._freeze()
        class_weights = None
        if self.config.class_weighted:
            class_weights = balanced_class_weights(dataset_labels(train_data)).to(self.device)

        train_loader = make_loader(
            train_data,
            self.config.batch_size,
            shuffle=True,
            seed=self.config.seed,
            num_workers=self.config.num_workers,
        )
        val_loader = make_loader(
            val_data, self.config.batch_size, shuffle=False, num_workers=self.config.num_workers
        )
        optimizer = torch.optim.AdamW(
            [param for _, param in self.trainable],
            lr=self.config.learning_rate,
            weight_decay=self.config.weight_decay,
        )

        stopper = EarlyStopping(self.config.early_stop_patience)
        history = TrainingHistory(stage=self.config.stage)
        best_state = None
        for epoch in range(1, self.config.max_epochs + 1):
            if hasattr(train_data, "set_epoch"):
                train_data.set_epoch(epoch)
            train_loss = self._train_epoch(train_loader, optimizer, epoch, class_weights)
            val_auroc = self.evaluate_auroc(val_loader)
            history.epochs.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=train_loss,
                    val_auroc=val_auroc,
                    trainable_hash=self.trainable_hash(),
                )
            )
            logger.info(
                "%s epoch %d: loss=%.4f val_auroc=%.4f",
                self.config.stage.value,
                epoch,
                train_loss,
                val_auroc,
            )
            if stopper.step(epoch, val_auroc):
                best_state = {
                    key: value.detach().clone()
                    for key, value in self.network.state_dict().items()
                }
            if stopper.should_stop:
                history.stopped_early = True
                logger.info(
                    "Early stopping after epoch %d (best epoch %d)", epoch, stopper.best_epoch
                )
                break

        if best_state is not None:
            self.network.load_state_dict(best_state)
        history.best_epoch = stopper.best_epoch
        self.network.eval()
        return history


def _head_parameters(model: TrainedModel) -> list[tuple[str, nn.Parameter]]:
    return [(f"head.{name}", param) for name, param in model.network.head.named_parameters()]


def _check_stage(config: TrainConfig, expected: TrainStage) -> None:
    if config.stage != expected:
        raise StageOrderError(
            f"Expected a {expected.value} config, got {config.stage.value}"
        )


def train_stage1(
    model: TrainedModel, train_data: Dataset, val_data: Dataset, config: TrainConfig
) -> TrainedModel:
    """Train the MLP head on a frozen backbone."""
    _check_stage(config, TrainStage.HEAD_ONLY)
    history = Trainer(model.network, config, _head_parameters(model)).fit(
        train_data, val_data
    )
    return model.with_history(history)


def train_stage2(
    model: TrainedModel, train_data: Dataset, val_data: Dataset, config: TrainConfig
) -> TrainedModel:
    """Jointly train the head and the deepest unfreeze_fraction of the backbone."""
    _check_stage(config, TrainStage.FINETUNE)
    if TrainStage.HEAD_ONLY not in model.stages_completed:
        raise StageOrderError("Stage 2 fine-tuning requires a completed stage 1")
    deep = deepest_parameters(model.network.backbone, model.spec.unfreeze_fraction)
    trainable = [(f"backbone.{name}", param) for name, param in deep]
    trainable += _head_parameters(model)
    logger.info(
        "Unfreezing %d backbone tensors (%d parameters)",
        len(deep),
        sum(param.numel() for _, param in deep),
    )
    history = Trainer(model.network, config, trainable).fit(train_data, val_data)
    return model.with_history(history)


def train_foundation(
    model: TrainedModel, train_data: Dataset, val_data: Dataset, config: TrainConfig
) -> TrainedModel:
    """Adapt the whole encoder and the MLP head in one stage."""
    _check_stage(config, TrainStage.FOUNDATION_ADAPT)
    trainable = list(model.network.named_parameters())
    history = Trainer(model.network, config, trainable).fit(train_data, val_data)
    return model.with_history(history)
