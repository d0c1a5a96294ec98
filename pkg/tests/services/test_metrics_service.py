import itertools
import numpy as np
import pytest
from src.core.exceptions import SingleClassError
from src.models.evaluation import ScoredSet
from src.services.metrics_service import (
    auprc,
    auroc,
    sensitivity_specificity,
    youden_threshold,
)

FOUR_POINT = ScoredSet.from_arrays([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])


def pairwise_auroc(scores, labels):
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for positive, negative in itertools.product(positives, negatives):
        wins += 1.0 if positive > negative else 0.5 if positive == negative else 0.0
    return wins / (len(positives) * len(negatives))


def enumerated_average_precision(scores, labels):
    scores, labels = np.asarray(scores), np.asarray(labels)
    total_positive = labels.sum()
    result, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        true_positive = np.sum(predicted & (labels == 1))
        precision = true_positive / predicted.sum()
        recall = true_positive / total_positive
        result += (recall - previous_recall) * precision
        previous_recall = recall
    return result


def test_auroc_perfect_and_constant_scores():
    perfect = ScoredSet.from_arrays([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    constant = ScoredSet.from_arrays([0.5] * 6, [0, 1, 0, 1, 0, 1])

    assert auroc(perfect) == 1.0
    assert auroc(constant) == 0.5


def test_auroc_four_point_example():
    assert auroc(FOUR_POINT) == pytest.approx(0.75)


def test_auroc_matches_pairwise_count():
    rng = np.random.default_rng(2)

    for _ in range(50):
        n = int(rng.integers(4, 13))
        labels = np.array([0, 1] + list(rng.integers(0, 2, n - 2)))
        scores = np.round(rng.random(n), 1)
        scored = ScoredSet.from_arrays(scores, labels)

        assert auroc(scored) == pytest.approx(pairwise_auroc(scores, labels))


def test_auroc_is_invariant_to_monotone_transform(rng):
    scores = rng.random(30)
    labels = np.arange(30) % 2

    raw = auroc(ScoredSet.from_arrays(scores, labels))
    squared = auroc(ScoredSet.from_arrays(scores**2, labels))

    assert raw == pytest.approx(squared)


def test_auroc_of_complemented_scores_sums_to_one(rng):
    scores = rng.random(20)
    labels = np.arange(20) % 2

    total = auroc(ScoredSet.from_arrays(scores, labels)) + auroc(
        ScoredSet.from_arrays(1 - scores, labels)
    )

    assert total == pytest.approx(1.0)


def test_auroc_requires_both_classes():
    with pytest.raises(SingleClassError):
        auroc(ScoredSet.from_arrays([0.2, 0.7], [1, 1]))


def test_auprc_four_point_example():
    assert auprc(FOUR_POINT) == pytest.approx(0.5 + 0.5 * 2 / 3)


def test_auprc_matches_enumerated_thresholds():
    rng = np.random.default_rng(4)

    for _ in range(50):
        n = int(rng.integers(4, 13))
        labels = np.array([0, 1] + list(rng.integers(0, 2, n - 2)))
        scores = np.round(rng.random(n), 1)

        expected = enumerated_average_precision(scores, labels)
        assert auprc(ScoredSet.from_arrays(scores, labels)) == pytest.approx(expected)


def test_auprc_all_positive_is_one_and_zero_positive_is_undefined():
    assert auprc(ScoredSet.from_arrays([0.3, 0.6], [1, 1])) == pytest.approx(1.0)
    with pytest.raises(SingleClassError):
        auprc(ScoredSet.from_arrays([0.3, 0.6], [0, 0]))


def test_sensitivity_specificity_four_point_example():
    assert sensitivity_specificity(FOUR_POINT, 0.5) == (0.5, 1.0)


def test_sensitivity_specificity_perfect_and_threshold_zero():
    perfect = ScoredSet.from_arrays([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])

    assert sensitivity_specificity(perfect, 0.5) == (1.0, 1.0)
    assert sensitivity_specificity(perfect, 0.0) == (1.0, 0.0)


def test_sensitivity_specificity_absent_class_is_none():
    scored = ScoredSet.from_arrays([0.2, 0.9], [1, 1])

    sensitivity, specificity = sensitivity_specificity(scored)

    assert sensitivity == 0.5
    assert specificity is None


def test_sensitivity_specificity_monotone_in_threshold(rng):
    scored = ScoredSet.from_arrays(rng.random(40), np.arange(40) % 2)

    pairs = [sensitivity_specificity(scored, t) for t in np.linspace(0, 1, 21)]

    sensitivities = [pair[0] for pair in pairs]
    specificities = [pair[1] for pair in pairs]
    assert sensitivities == sorted(sensitivities, reverse=True)
    assert specificities == sorted(specificities)


def test_sensitivity_specificity_rejects_threshold_outside_unit_interval():
    with pytest.raises(ValueError):
        sensitivity_specificity(FOUR_POINT, 1.5)


def test_youden_threshold():
    perfect = ScoredSet.from_arrays([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])

    assert youden_threshold(perfect) == pytest.approx(0.8)
    assert youden_threshold(FOUR_POINT) == pytest.approx(0.8)
