"""Pipeline orchestration service.
Wires data ingest, preprocessing, training, fusion, evaluation and explanation
into the command-level operations. Every command is driven by one RunConfig,
writes the effective config next to its outputs and skips work whose outputs
already exist unless forced.
"""

import dataclasses
import logging
from pathlib import Path
from typing import Sequence
import numpy as np
from ..core.config import config_snapshot, write_effective_config
from ..core.exceptions import (
    EmptyManifestError,
    MissingCheckpointError,
    MissingPredictionsError,
    UnknownImageError,
)
from ..models.evaluation import FUSION_MODEL, EvalReport, RowKey, ScoredSet, ThresholdRule
from ..models.fusion import FeatureMatrix, FusionSource
from ..models.record import TASK_DEFINITIONS, Domain, ImageRecord, Split
from ..models.run import RunConfig
from ..models.training import ArchitectureId, TrainStage
from .classifier_service import (
    TrainedModel,
    build_classifier,
    checkpoint_name,
    load_checkpoint,
    predict_loader,
    predict_proba,
    save_checkpoint,
)
from .dataset_service import ScreeningDataset, make_loader, make_pipeline
from .evaluation_service import (
    declared_rows,
    evaluate_run,
    read_predictions,
    write_predictions,
    write_report,
)
from .explain_service import explain_image, write_html_report, write_panel
from .frequency_service import FrequencyPipeline
from .fusion_service import (
    concat_standardized,
    extract_features,
    fit_standardizer,
    load_feature_matrix,
    save_feature_matrix,
    save_fusion_model,
    train_fusion_head,
)
from .manifest_service import ManifestService
from .spatial_service import SpatialPipeline, crop_center, load_image
from .split_service import SplitService
from .synthetic_service import make_synthetic_dataset
from .training_service import train_foundation, train_stage1, train_stage2

logger = logging.getLogger(__name__)

EVAL_SPLITS = (Split.VAL, Split.TEST)
DUMP_LIMIT = 8


class PipelineService:
    """Runs the pipeline commands for one RunConfig."""

    def __init__(
        self,
        config: RunConfig,
        manifest_service: ManifestService | None = None,
        split_service: SplitService | None = None,
        force: bool = False,
    ):
        self.config = config
        self.manifest_service = manifest_service or ManifestService()
        self.split_service = split_service or SplitService()
        self.force = force

    @property
    def task_id(self) -> int:
        return self.config.run.task_id

    @property
    def domain(self) -> Domain:
        return self.config.run.domain

    @property
    def seed(self) -> int:
        return self.config.run.seed

    @property
    def task_dir(self) -> Path:
        return self.config.task_dir()

    @property
    def checkpoint_dir(self) -> Path:
        return self.task_dir / "checkpoints"

    def predictions_path(
        self, model: str, split: Split, task_id: int | None = None, domain: Domain | None = None
    ) -> Path:
        task_id = task_id or self.task_id
        name = checkpoint_name(task_id, domain or self.domain, model, self.seed)
        return self.config.task_dir(task_id) / "predictions" / f"{name}.{split.value}.csv"

    def checkpoint_path(self, architecture: ArchitectureId, stage: str | None = None) -> Path:
        name = checkpoint_name(self.task_id, self.domain, architecture.value, self.seed)
        suffix = f".{stage}.pt" if stage else ".pt"
        return self.checkpoint_dir / f"{name}{suffix}"

    def fusion_path(self) -> Path:
        name = checkpoint_name(self.task_id, self.domain, FUSION_MODEL, self.seed)
        return self.task_dir / "fusion" / f"{name}.pt"

    def _should_skip(self, *paths: Path) -> bool:
        if self.force:
            return False
        return all(Path(path).exists() for path in paths)

    # data

    def task_records(self) -> list[ImageRecord]:
        records = self.manifest_service.load_manifest(self.config.run.manifest)
        if not records:
            raise EmptyManifestError(f"Manifest {self.config.run.manifest} has no records")
        return [record for record in records if record.participates_in(self.task_id)]

    def split_records(self) -> dict[Split, list[ImageRecord]]:
        """Records of every split, ordered by image_id."""
        splits = self.manifest_service.read_split_assignments(
            self.config.split_file, self.task_id
        )
        assigned = sorted(
            self.manifest_service.assign_splits(self.task_records(), self.task_id, splits),
            key=lambda record: record.image_id,
        )
        return {
            split: self.manifest_service.records_for(assigned, self.task_id, split)
            for split in Split
        }

    def pipeline(self) -> SpatialPipeline | FrequencyPipeline:
        return make_pipeline(
            self.domain, self.config.spatial, self.config.frequency, self.config.input_size()
        )

    def dataset(self, records: Sequence[ImageRecord], train: bool = False) -> ScreeningDataset:
        return ScreeningDataset(
            records, self.task_id, self.pipeline(), seed=self.seed, train=train
        )

    # commands

    def cmd_split(self) -> Path:
        """Write the stratified train/val/test assignment of the configured task."""
        path = self.config.split_file
        if self._should_skip(path):
            logger.info("Split file %s exists, skipping", path)
            return path
        records = self.task_records()
        if not records:
            raise EmptyManifestError(f"No records are labeled for task {self.task_id}")
        assignment = self.split_service.stratified_split(
            records, self.config.split.ratios, self.seed, self.task_id
        )
        self.manifest_service.write_split_assignments([assignment], path)
        write_effective_config(self.config, self.task_dir)

        assigned = self.manifest_service.assign_splits(
            records, self.task_id, assignment.assignments
        )
        for split in Split:
            negative, positive = self.split_service.class_distribution(
                assigned, self.task_id, split
            )
            logger.info(
                "Task %d %s: %s=%d %s=%d",
                self.task_id,
                split.value,
                TASK_DEFINITIONS[self.task_id].negative_class_name,
                negative,
                TASK_DEFINITIONS[self.task_id].positive_class_name,
                positive,
            )
        return path

    def dump_preprocessing(
        self, records: Sequence[ImageRecord], stages: bool = True, spectrum: bool = False
    ) -> Path:
        directory = self.task_dir / "dumps"
        spatial = SpatialPipeline(self.config.spatial, self.config.input_size())
        frequency = FrequencyPipeline(
            self.config.spatial, self.config.frequency, self.config.input_size()
        )
        for record in list(records)[:DUMP_LIMIT]:
            image = load_image(record.image_path)
            if spectrum:
                frequency.dump_spectrum(image, directory / f"{record.image_id}_spectrum.png")
            if stages:
                spatial.dump_stages(image, directory, record.image_id)
        return directory

    def _train_one(
        self, architecture: ArchitectureId, train_data, val_data
    ) -> TrainedModel:
        spec = self.config.backbone_spec(architecture)
        model = build_classifier(
            spec, seed=self.seed, domain=self.domain, task_id=self.task_id
        )
        model = dataclasses.replace(model, config_snapshot=config_snapshot(self.config))
        train_config = self.config.training_config()

        if spec.default_stage == TrainStage.FOUNDATION_ADAPT:
            return train_foundation(
                model, train_data, val_data, train_config.for_stage(TrainStage.FOUNDATION_ADAPT)
            )

        stage1_path = self.checkpoint_path(architecture, stage="stage1")
        if self._should_skip(stage1_path):
            logger.info("Resuming %s from %s", architecture.value, stage1_path)
            model = load_checkpoint(stage1_path)
        else:
            model = train_stage1(
                model, train_data, val_data, train_config.for_stage(TrainStage.HEAD_ONLY)
            )
            save_checkpoint(model, stage1_path)
        return train_stage2(
            model, train_data, val_data, train_config.for_stage(TrainStage.FINETUNE)
        )

    def _write_model_predictions(self, model: TrainedModel, splits) -> None:
        batch_size = self.config.training.batch_size
        for split in EVAL_SPLITS:
            dataset = self.dataset(splits[split])
            scores = predict_loader(
                model, make_loader(dataset, batch_size, shuffle=False), self.domain
            )
            write_predictions(
                ScoredSet.from_arrays(scores, dataset.labels, dataset.image_ids),
                self.predictions_path(model.spec.architecture_id.value, split),
            )

    def cmd_train(self, dump_stages: bool = False, dump_spectrum: bool = False) -> list[Path]:
        """Train every configured architecture; returns the checkpoint paths."""
        splits = self.split_records()
        if dump_stages or dump_spectrum:
            self.dump_preprocessing(splits[Split.TRAIN], dump_stages, dump_spectrum)
        write_effective_config(self.config, self.task_dir)

        train_data = self.dataset(splits[Split.TRAIN], train=True)
        val_data = self.dataset(splits[Split.VAL])
        paths = []
        for architecture in self.config.run.architectures:
            path = self.checkpoint_path(architecture)
            if self._should_skip(path):
                logger.info("Checkpoint %s exists, skipping", path)
                paths.append(path)
                continue
            model = self._train_one(architecture, train_data, val_data)
            save_checkpoint(model, path)
            self._write_model_predictions(model, splits)
            logger.info(
                "%s: best val AUROC %.4f at epoch %d",
                model.checkpoint_id,
                model.history.best_auroc,
                model.best_epoch,
            )
            paths.append(path)
        return paths

    def _features(
        self, model: TrainedModel, split: Split, records: Sequence[ImageRecord]
    ) -> FeatureMatrix:
        path = self.task_dir / "features" / f"{model.checkpoint_id}.{split.value}.uwff"
        expected_ids = tuple(record.image_id for record in records)
        if self._should_skip(path):
            cached = load_feature_matrix(path)
            if cached.image_ids == expected_ids:
                return cached
        matrix = extract_features(
            model,
            self.dataset(records),
            self.domain,
            image_ids=expected_ids,
            batch_size=self.config.fusion.extraction_batch_size,
        )
        save_feature_matrix(matrix, path)
        return matrix

    def source_models(self) -> list[TrainedModel]:
        paths = [self.checkpoint_path(arch) for arch in self.config.run.architectures]
        missing = [path.name for path in paths if not path.is_file()]
        if missing:
            raise MissingCheckpointError(f"Fusion needs missing checkpoints: {missing}")
        return [load_checkpoint(path) for path in paths]

    def cmd_fuse(self) -> Path:
        """Extract, standardize and concatenate features of the domain's models and
        train the fusion head."""
        path = self.fusion_path()
        if self._should_skip(path):
            logger.info("Fusion checkpoint %s exists, skipping", path)
            return path
        splits = self.split_records()
        models = self.source_models()
        write_effective_config(self.config, self.task_dir)

        matrices = {
            split: [self._features(model, split, splits[split]) for model in models]
            for split in Split
        }
        epsilon = self.config.fusion.epsilon
        stats = [fit_standardizer(matrix, epsilon) for matrix in matrices[Split.TRAIN]]
        joined = {split: concat_standardized(matrices[split], stats) for split in Split}
        labels = {
            split: np.asarray([r.label_for(self.task_id) for r in splits[split]])
            for split in Split
        }
        sources = [
            FusionSource(checkpoint_id=model.checkpoint_id, stats=s, feature_dim=m.num_columns)
            for model, s, m in zip(models, stats, matrices[Split.TRAIN])
        ]
        fusion_model = train_fusion_head(
            joined[Split.TRAIN],
            labels[Split.TRAIN],
            joined[Split.VAL],
            labels[Split.VAL],
            self.config.fusion,
            seed=self.seed,
            sources=sources,
            train_config=self.config.fusion_training_config(),
        )
        fusion_model = dataclasses.replace(
            fusion_model, task_id=self.task_id, config_snapshot=config_snapshot(self.config)
        )
        save_fusion_model(fusion_model, path)

        for split in EVAL_SPLITS:
            scores = fusion_model.predict_concatenated(joined[split].values)
            write_predictions(
                ScoredSet.from_arrays(scores, labels[split], joined[split].image_ids),
                self.predictions_path(FUSION_MODEL, split),
            )
        return path

    def report_rows(self) -> list[RowKey]:
        evaluation = self.config.evaluation
        return declared_rows(
            evaluation.report_tasks or [self.task_id],
            evaluation.report_domains or [self.domain],
            [architecture.value for architecture in self.config.run.architectures],
            evaluation.include_fusion,
        )

    def _collect(self, rows: Sequence[RowKey], split: Split) -> dict[RowKey, ScoredSet]:
        collected, missing = {}, []
        for key in rows:
            path = self.predictions_path(key.model, split, key.task_id, key.domain)
            if path.is_file():
                collected[key] = read_predictions(path)
            else:
                missing.append(key.label())
        if missing:
            raise MissingPredictionsError(
                f"Missing {split.value} predictions for rows: {missing}"
            )
        return collected

    def cmd_evaluate(self) -> EvalReport:
        """Compute the report over the test split; writes report.csv / report.txt."""
        rows = self.report_rows()
        predictions = self._collect(rows, Split.TEST)
        validation = None
        if self.config.evaluation.threshold_rule == ThresholdRule.YOUDEN:
            validation = self._collect(rows, Split.VAL)
        report = evaluate_run(
            predictions,
            self.config.evaluation,
            seed=self.seed,
            rows=rows,
            validation=validation,
        )
        report_dir = self.config.run.output_dir / "report"
        write_effective_config(self.config, report_dir)
        write_report(report, report_dir)
        return report

    def _display_image(self, image: np.ndarray) -> np.ndarray:
        if self.domain == Domain.FREQUENCY:
            return self.pipeline().prepare(image)
        spatial = self.config.spatial
        return crop_center(
            image, spatial.crop_size, spatial.foreground_threshold, spatial.pad_small_images
        )

    def cmd_explain(self, image_ids: Sequence[str] | None = None) -> Path:
        """Grad-CAM panels for each trained model of the domain plus an HTML index."""
        explain = self.config.explain
        splits = self.split_records()
        by_id = {record.image_id: record for records in splits.values() for record in records}
        wanted = list(image_ids or explain.image_ids)
        if not wanted:
            wanted = [record.image_id for record in splits[Split.TEST][: explain.max_images]]
        unknown = [image_id for image_id in wanted if image_id not in by_id]
        if unknown:
            raise UnknownImageError(f"Unknown image ids for task {self.task_id}: {unknown}")

        directory = self.task_dir / "explain"
        write_effective_config(self.config, directory)
        pipeline = self.pipeline()
        entries = []
        for model in self.source_models():
            architecture = model.spec.architecture_id.value
            for image_id in wanted:
                image = load_image(by_id[image_id].image_path)
                tensor = pipeline(image)
                heatmap = explain_image(model, tensor, explain.target_class, image_id)
                score = predict_proba(model, tensor, self.domain)
                png_path, _ = write_panel(
                    self._display_image(image),
                    heatmap,
                    directory / architecture,
                    image_id,
                    explain.colormap,
                    explain.alpha,
                    score,
                )
                entries.append(
                    {
                        "task_id": self.task_id,
                        "image_id": image_id,
                        "model": architecture,
                        "panel": png_path.relative_to(directory).as_posix(),
                        "score": score,
                    }
                )
        write_html_report(entries, directory / "index.html")
        return directory

    def cmd_synth(self) -> Path:
        synth = self.config.synth
        manifest = Path(synth.output_dir) / "manifest.csv"
        if self._should_skip(manifest):
            logger.info("Synthetic manifest %s exists, skipping", manifest)
            return manifest
        manifest, _ = make_synthetic_dataset(
            seed=synth.seed,
            n=synth.n,
            image_size=synth.image_size,
            output_dir=synth.output_dir,
            blur_sigma_range=synth.blur_sigma_range,
        )
        return manifest
