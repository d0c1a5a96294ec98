"""Feature-level fusion service.
Extracts pooled embeddings from the trained models of one domain, standardizes
them with training-split statistics, concatenates them and trains an MLP head.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
import numpy as np
import torch
from torch import nn
from torch.utils.data import Dataset, TensorDataset
from ..core.exceptions import (
    DataError,
    DomainMismatchError,
    EmptyDatasetError,
    MissingCheckpointError,
    RowOrderMismatchError,
)
from ..models.fusion import FeatureMatrix, FusionConfig, FusionSource, StandardizerStats
from ..models.record import Domain
from ..models.training import TrainConfig, TrainingHistory, TrainStage
from .classifier_service import TrainedModel, load_checkpoint, model_device
from .dataset_service import make_loader
from .training_service import Trainer

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"UWFF"
FEATURE_VERSION = 1
FUSION_FORMAT = "uwfscreen-fusion"


@torch.no_grad()
def extract_features(
    model: TrainedModel,
    images: torch.Tensor | Dataset,
    domain: Domain,
    image_ids: Sequence[str] | None = None,
    batch_size: int = 32,
) -> FeatureMatrix:
    """Pooled pre-head embedding of every image, in input order.
    `images` is an NCHW tensor or a dataset of (tensor, label) pairs."""
    if Domain(domain) != model.domain:
        raise DomainMismatchError(
            f"Model {model.checkpoint_id} expects {model.domain.value} inputs, "
            f"got {Domain(domain).value}"
        )
    if image_ids is None:
        image_ids = getattr(images, "image_ids", None) or [
            str(i) for i in range(len(images))
        ]

    network = model.network
    network.eval()
    device = model_device(network)
    if isinstance(images, torch.Tensor):
        batches = (images[i : i + batch_size] for i in range(0, len(images), batch_size))
    else:
        batches = (batch for batch, _ in make_loader(images, batch_size, shuffle=False))

    blocks = [network.features(batch.to(device)).double().cpu().numpy() for batch in batches]
    feature_dim = network.backbone.feature_dim
    values = np.concatenate(blocks) if blocks else np.zeros((0, feature_dim))
    return FeatureMatrix(
        values=values,
        image_ids=tuple(image_ids),
        source_model=model.checkpoint_id,
        domain=model.domain,
        layer_name=network.backbone.feature_layer_name,
    )


def fit_standardizer(train_features: FeatureMatrix, epsilon: float = 1e-8) -> StandardizerStats:
    """Column means and population stds of the training rows; stds below
    epsilon are replaced by epsilon and flagged."""
    if train_features.num_rows < 2:
        raise EmptyDatasetError("Standardizer needs at least two training rows")
    mean = train_features.values.mean(axis=0)
    std = train_features.values.std(axis=0)
    degenerate = np.flatnonzero(std < epsilon)
    stats = StandardizerStats(
        mean=mean,
        std=np.where(std < epsilon, epsilon, std),
        epsilon=epsilon,
        degenerate_columns=tuple(int(i) for i in degenerate),
        num_rows=train_features.num_rows,
    )
    if stats.has_degenerate_columns:
        logger.warning(
            "%s: %d constant feature columns, std set to %g",
            train_features.source_model,
            len(stats.degenerate_columns),
            epsilon,
        )
    return stats


def concat_standardized(
    matrices: Sequence[FeatureMatrix], stats: Sequence[StandardizerStats]
) -> FeatureMatrix:
    """Standardize each matrix with its stats and join the blocks in the given order."""
    if not matrices or len(matrices) != len(stats):
        raise ValueError("Need one StandardizerStats per FeatureMatrix")
    first = matrices[0]
    for matrix in matrices[1:]:
        if matrix.domain != first.domain:
            raise DomainMismatchError("Fusion never mixes rgb and frequency features")
        if matrix.num_rows != first.num_rows:
            raise RowOrderMismatchError(
                f"{matrix.source_model} has {matrix.num_rows} rows, "
                f"{first.source_model} has {first.num_rows}"
            )
        for ours, theirs in zip(first.image_ids, matrix.image_ids):
            if ours != theirs:
                raise RowOrderMismatchError(
                    f"Row order differs from {first.source_model} at image_id {theirs!r} "
                    f"in {matrix.source_model}"
                )

    blocks = [s.apply(m.values) for m, s in zip(matrices, stats)]
    return FeatureMatrix(
        values=np.concatenate(blocks, axis=1),
        image_ids=first.image_ids,
        source_model="+".join(m.source_model for m in matrices),
        domain=first.domain,
        layer_name="+".join(m.layer_name for m in matrices),
    )


class FusionHead(nn.Module):
    """One-hidden-layer MLP on the concatenated embedding."""

    def __init__(self, input_dim: int, hidden_dim: int = 256, dropout: float = 0.3):
        super().__init__()
        self.input_dim = input_dim
        self.layers = nn.Sequential(
            nn.Linear(input_dim, hidden_dim),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden_dim, 2),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.layers(features)


@dataclass(frozen=True)
class FusionModel:
    """Ordered source models with their stats, the trained head and the domain."""

    sources: tuple[FusionSource, ...]
    head: FusionHead
    domain: Domain
    history: TrainingHistory | None = None
    seed: int = 42
    task_id: int | None = None
    config_snapshot: dict = field(default_factory=dict)

    @property
    def source_ids(self) -> tuple[str, ...]:
        return tuple(source.checkpoint_id for source in self.sources)

    @torch.no_grad()
    def predict_concatenated(self, values: np.ndarray) -> np.ndarray:
        self.head.eval()
        features = torch.as_tensor(values, dtype=torch.float32)
        logits = self.head(features.to(model_device(self.head)))
        return torch.softmax(logits.double(), dim=1)[:, 1].cpu().numpy()


def _feature_dataset(values: np.ndarray, labels: Sequence[int]) -> TensorDataset:
    return TensorDataset(
        torch.as_tensor(values, dtype=torch.float32),
        torch.as_tensor(np.asarray(labels), dtype=torch.long),
    )


def train_fusion_head(
    features: FeatureMatrix,
    labels: Sequence[int],
    val_features: FeatureMatrix,
    val_labels: Sequence[int],
    config: FusionConfig,
    seed: int = 42,
    sources: Sequence[FusionSource] = (),
    train_config: TrainConfig | None = None,
) -> FusionModel:
    """Train the fusion MLP with the classifier optimizer, loss and early stopping."""
    if features.domain != val_features.domain:
        raise DomainMismatchError("Training and validation features differ in domain")
    base = train_config or config.training or TrainConfig()
    train_config = base.model_copy(
        update={"stage": TrainStage.HEAD_ONLY, "use_cutmix": False, "seed": seed}
    )

    torch.manual_seed(seed)
    head = FusionHead(features.num_columns, config.hidden_dim, config.dropout)
    history = Trainer(head, train_config, list(head.named_parameters())).fit(
        _feature_dataset(features.values, labels),
        _feature_dataset(val_features.values, val_labels),
    )
    logger.info(
        "Fusion head (%d inputs) best val AUROC %.4f at epoch %d",
        features.num_columns,
        history.best_auroc,
        history.best_epoch,
    )
    return FusionModel(
        sources=tuple(sources), head=head, domain=features.domain, history=history, seed=seed
    )


class FusionPredictor:
    """Online fusion path: (preprocess) -> per-model extract -> standardize ->
    concatenate -> MLP, using exactly the recorded source models in order."""

    def __init__(self, fusion_model: FusionModel, models: Sequence[TrainedModel], pipeline=None):
        ids = tuple(model.checkpoint_id for model in models)
        if ids != fusion_model.source_ids:
            raise MissingCheckpointError(
                f"Fusion expects source models {list(fusion_model.source_ids)}, got {list(ids)}"
            )
        for model in models:
            if model.domain != fusion_model.domain:
                raise DomainMismatchError(
                    f"{model.checkpoint_id} is a {model.domain.value} model"
                )
        self.fusion_model = fusion_model
        self.models = list(models)
        self.pipeline = pipeline

    @classmethod
    def from_checkpoints(
        cls, fusion_model: FusionModel, checkpoint_dir: Path, pipeline=None
    ) -> "FusionPredictor":
        missing = [
            source_id
            for source_id in fusion_model.source_ids
            if not (Path(checkpoint_dir) / f"{source_id}.pt").is_file()
        ]
        if missing:
            raise MissingCheckpointError(f"Missing source checkpoints: {missing}")
        models = [
            load_checkpoint(Path(checkpoint_dir) / f"{source_id}.pt")
            for source_id in fusion_model.source_ids
        ]
        return cls(fusion_model, models, pipeline)

    def predict(
        self, images: torch.Tensor | Dataset, domain: Domain, batch_size: int = 32
    ) -> np.ndarray:
        matrices = [
            extract_features(model, images, domain, batch_size=batch_size)
            for model in self.models
        ]
        stats = [source.stats for source in self.fusion_model.sources]
        return self.fusion_model.predict_concatenated(concat_standardized(matrices, stats).values)

    def predict_image(self, image: np.ndarray) -> float:
        """Probability for one raw image, preprocessed with the fusion domain's pipeline."""
        if self.pipeline is None:
            raise ValueError("FusionPredictor was built without a preprocessing pipeline")
        tensor = self.pipeline(image).unsqueeze(0)
        return float(self.predict(tensor, self.fusion_model.domain)[0])


def fusion_predict(
    fusion_model: FusionModel,
    images: torch.Tensor,
    models: Sequence[TrainedModel],
    domain: Domain,
) -> float | np.ndarray:
    """Fusion probability for one CHW image (float) or an NCHW batch."""
    single = images.ndim == 3
    batch = images.unsqueeze(0) if single else images
    scores = FusionPredictor(fusion_model, models).predict(batch, domain)
    return float(scores[0]) if single else scores


def _write_text(handle, text: str) -> None:
    encoded = text.encode("utf-8")
    handle.write(struct.pack("<I", len(encoded)))
    handle.write(encoded)


def _read_text(handle) -> str:
    (length,) = struct.unpack("<I", handle.read(4))
    return handle.read(length).decode("utf-8")


def save_feature_matrix(matrix: FeatureMatrix, path: Path) -> Path:
    """Binary layout, little-endian:
    magic "UWFF" | u16 version | u32 rows | u32 cols |
    str domain | str source_model | str layer_name | rows x str image_id |
    rows*cols float32 row-major values. Each str is u32 byte length + UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(FEATURE_MAGIC)
        handle.write(struct.pack("<HII", FEATURE_VERSION, matrix.num_rows, matrix.num_columns))
        _write_text(handle, matrix.domain.value)
        _write_text(handle, matrix.source_model)
        _write_text(handle, matrix.layer_name)
        for image_id in matrix.image_ids:
            _write_text(handle, image_id)
        handle.write(matrix.values.astype("<f4").tobytes(order="C"))
    return path


def load_feature_matrix(path: Path) -> FeatureMatrix:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Feature file not found: {path}")
    with path.open("rb") as handle:
        if handle.read(4) != FEATURE_MAGIC:
            raise DataError(f"{path} is not a feature matrix file")
        version, rows, cols = struct.unpack("<HII", handle.read(10))
        if version != FEATURE_VERSION:
            raise DataError(f"{path}: unsupported feature file version {version}")
        domain = Domain(_read_text(handle))
        source_model = _read_text(handle)
        layer_name = _read_text(handle)
        image_ids = tuple(_read_text(handle) for _ in range(rows))
        values = np.frombuffer(handle.read(rows * cols * 4), dtype="<f4")
    return FeatureMatrix(
        values=values.reshape(rows, cols).astype(np.float64),
        image_ids=image_ids,
        source_model=source_model,
        domain=domain,
        layer_name=layer_name,
    )


def save_fusion_model(fusion_model: FusionModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "format": FUSION_FORMAT,
        "domain": fusion_model.domain.value,
        "seed": fusion_model.seed,
        "task_id": fusion_model.task_id,
        "sources": [
            {
                "checkpoint_id": source.checkpoint_id,
                "feature_dim": source.feature_dim,
                "stats": source.stats.to_dict(),
            }
            for source in fusion_model.sources
        ],
        "input_dim": fusion_model.head.input_dim,
        "hidden_dim": fusion_model.head.layers[0].out_features,
        "dropout": fusion_model.head.layers[2].p,
        "history": fusion_model.history.model_dump(mode="json") if fusion_model.history else None,
        "config": fusion_model.config_snapshot,
        "state_dict": {k: v.detach().cpu() for k, v in fusion_model.head.state_dict().items()},
    }
    torch.save(archive, path)
    return path


def load_fusion_model(path: Path) -> FusionModel:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"Fusion checkpoint not found: {path}")
    archive = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(archive, dict) or archive.get("format") != FUSION_FORMAT:
        raise MissingCheckpointError(f"{path} is not a fusion checkpoint")
    head = FusionHead(archive["input_dim"], archive["hidden_dim"], archive["dropout"])
    head.load_state_dict(archive["state_dict"])
    head.eval()
    sources = tuple(
        FusionSource(
            checkpoint_id=source["checkpoint_id"],
            stats=StandardizerStats.from_dict(source["stats"]),
            feature_dim=source["feature_dim"],
        )
        for source in archive["sources"]
    )
    history = archive["history"]
    return FusionModel(
        sources=sources,
        head=head,
        domain=Domain(archive["domain"]),
        history=TrainingHistory.model_validate(history) if history else None,
        seed=archive["seed"],
        task_id=archive["task_id"],
        config_snapshot=archive["config"],
    )
