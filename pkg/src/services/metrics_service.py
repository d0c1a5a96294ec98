"""Binary screening metrics: AUROC, AUPRC, sensitivity, specificity and Youden threshold."""

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score, roc_curve
from ..core.exceptions import SingleClassError
from ..models.evaluation import ScoredSet


def auroc(scored: ScoredSet) -> float:
    """Probability that a random positive outranks a random negative (ties count 1/2)."""
    if scored.num_positive == 0 or scored.num_negative == 0:
        raise SingleClassError(
            f"AUROC needs both classes (got {scored.num_positive} positive, "
            f"{scored.num_negative} negative)"
        )
    return float(roc_auc_score(scored.labels, scored.scores))


def auprc(scored: ScoredSet) -> float:
    """Average precision: sum over distinct thresholds of recall gain x precision."""
    if scored.num_positive == 0:
        raise SingleClassError("AUPRC needs at least one positive sample")
    return float(average_precision_score(scored.labels, scored.scores))


def sensitivity_specificity(
    scored: ScoredSet, threshold: float = 0.5
) -> tuple[float | None, float | None]:
    """Positive means score >= threshold. A metric whose class is absent is None."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    predicted = scored.scores >= threshold
    positives = scored.labels == 1
    negatives = ~positives

    true_positive = int(np.sum(predicted & positives))
    true_negative = int(np.sum(~predicted & negatives))
    sensitivity = true_positive / scored.num_positive if scored.num_positive else None
    specificity = true_negative / scored.num_negative if scored.num_negative else None
    return sensitivity, specificity


def youden_threshold(scored: ScoredSet) -> float:
    """Threshold maximizing sensitivity + specificity - 1 (first one on ties)."""
    if scored.num_positive == 0 or scored.num_negative == 0:
        raise SingleClassError("Youden threshold needs both classes")
    fpr, tpr, thresholds = roc_curve(scored.labels, scored.scores)
    best = int(np.argmax(tpr - fpr))
    return float(np.clip(thresholds[best], 0.0, 1.0))
