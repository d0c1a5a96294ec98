"""Evaluation report service.
Assembles per (task, domain, model) metric rows and writes them as CSV and as a
grouped text table; also reads and writes per-model prediction CSVs.
"""

import logging
from pathlib import Path
from typing import Mapping, Sequence
import pandas as pd
from ..core.exceptions import (
    MissingPredictionsError,
    SingleClassError,
    UndefinedMetricError,
)
from ..models.evaluation import (
    FUSION_MODEL,
    EvalReport,
    EvalRow,
    EvaluationConfig,
    RowKey,
    ScoredSet,
    ThresholdRule,
)
from ..models.record import Domain
from .metrics_service import auprc, auroc, sensitivity_specificity, youden_threshold

logger = logging.getLogger(__name__)

PREDICTION_HEADER = ["image_id", "score", "label"]
REPORT_HEADER = [
    "task_id",
    "domain",
    "model",
    "auroc",
    "auprc",
    "sensitivity",
    "specificity",
    "threshold",
    "threshold_rule",
    "split",
    "seed",
]
METRICS = ("auroc", "auprc", "sensitivity", "specificity")


def declared_rows(
    task_ids: Sequence[int],
    domains: Sequence[Domain],
    models: Sequence[str],
    include_fusion: bool = True,
) -> list[RowKey]:
    """Report rows in table order: task, then domain, then model (fusion last)."""
    names = list(models) + ([FUSION_MODEL] if include_fusion else [])
    return [
        RowKey(task_id=task_id, domain=domain, model=name)
        for task_id in task_ids
        for domain in domains
        for name in names
    ]


def _defined_or_none(metric, scored: ScoredSet) -> float | None:
    try:
        return metric(scored)
    except SingleClassError:
        return None


def evaluate_run(
    predictions: Mapping[RowKey, ScoredSet],
    config: EvaluationConfig = EvaluationConfig(),
    seed: int = 42,
    rows: Sequence[RowKey] | None = None,
    validation: Mapping[RowKey, ScoredSet] | None = None,
    split: str = "test",
) -> EvalReport:
    """One EvalRow per declared row (all prediction keys when none are declared).
    Undefined metrics are None, never 0."""
    rows = list(rows) if rows is not None else list(predictions)
    if not rows:
        raise MissingPredictionsError("No predictions to evaluate")
    missing = [key.label() for key in rows if key not in predictions]
    if missing:
        raise MissingPredictionsError(f"Missing predictions for rows: {missing}")

    report_rows = []
    for key in rows:
        scored = predictions[key]
        threshold = config.threshold
        if config.threshold_rule == ThresholdRule.YOUDEN:
            if validation is None or key not in validation:
                raise MissingPredictionsError(
                    f"Youden threshold needs validation predictions for {key.label()}"
                )
            threshold = youden_threshold(validation[key])
        sensitivity, specificity = sensitivity_specificity(scored, threshold)
        report_rows.append(
            EvalRow(
                key=key,
                auroc=_defined_or_none(auroc, scored),
                auprc=_defined_or_none(auprc, scored),
                sensitivity=sensitivity,
                specificity=specificity,
                threshold=threshold,
            )
        )
    return EvalReport(
        rows=report_rows, threshold_rule=config.threshold_rule, split=split, seed=seed
    )


def report_frame(report: EvalReport) -> pd.DataFrame:
    """One row per report row in REPORT_HEADER order; undefined metrics are NaN."""
    frame = pd.DataFrame(
        [
            {
                "task_id": row.key.task_id,
                "domain": row.key.domain.value,
                "model": row.key.model,
                **{metric: getattr(row, metric) for metric in METRICS},
                "threshold": row.threshold,
                "threshold_rule": report.threshold_rule.value,
                "split": report.split,
                "seed": report.seed,
            }
            for row in report.rows
        ],
        columns=REPORT_HEADER,
    )
    frame[list(METRICS)] = frame[list(METRICS)].astype(float)
    return frame


def write_report_csv(report: EvalReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report).to_csv(
        path, index=False, float_format="%.6f", na_rep="", lineterminator="\n"
    )
    return path


def _percent(value: float, best: float) -> str:
    if pd.isna(value):
        return "n/a"
    return f"{value * 100:.2f}%" + ("*" if value == best else " ")


def format_report_table(report: EvalReport) -> str:
    """Text table in task x domain blocks; the best value of each metric within
    a block is marked with '*'."""
    frame = report_frame(report)
    metrics = list(METRICS)
    best = frame.groupby(["task_id", "domain"], sort=False)[metrics].transform("max")

    lines = []
    for (task_id, domain), block in frame.groupby(["task_id", "domain"], sort=False):
        cells = pd.DataFrame(
            {
                metric: [
                    _percent(value, top)
                    for value, top in zip(block[metric], best.loc[block.index, metric])
                ]
                for metric in metrics
            }
        )
        cells.insert(0, "model", block["model"].tolist())
        width = max(cells["model"].str.len().max(), len("model"))
        lines.append(f"Task {task_id} | {domain}")
        lines.append(
            cells.to_string(
                index=False,
                col_space=12,
                justify="right",
                formatters={"model": f"{{:<{width}}}".format},
            )
        )
        lines.append("")
    lines.append(
        f"threshold rule: {report.threshold_rule.value} | split: {report.split} | seed: {report.seed}"
    )
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, directory: Path) -> tuple[Path, Path]:
    """Write report.csv and report.txt, then fail if any metric is undefined."""
    directory = Path(directory)
    csv_path = write_report_csv(report, directory / "report.csv")
    txt_path = directory / "report.txt"
    txt_path.write_text(format_report_table(report), encoding="utf-8")
    logger.info("Wrote evaluation report with %d rows to %s", len(report.rows), directory)
    if report.has_undefined:
        undefined = [row.key.label() for row in report.rows if row.has_undefined]
        raise UndefinedMetricError(f"Undefined metrics in rows: {undefined}")
    return csv_path, txt_path


def write_predictions(scored: ScoredSet, path: Path) -> Path:
    """image_id,score,label rows; scores keep full float64 precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "image_id": list(scored.image_ids),
            "score": scored.scores.astype(float),
            "label": scored.labels.astype(int),
        },
        columns=PREDICTION_HEADER,
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_predictions(path: Path) -> ScoredSet:
    path = Path(path)
    if not path.is_file():
        raise MissingPredictionsError(f"Prediction file not found: {path}")
    frame = pd.read_csv(
        path,
        dtype={"image_id": str},
        keep_default_na=False,
        float_precision="round_trip",
    )
    return ScoredSet.from_arrays(
        frame["score"].to_numpy(dtype=float),
        frame["label"].to_numpy(dtype=int),
        frame["image_id"].tolist(),
    )
