import pytest
from src.core.exceptions import InsufficientClassError, MissingLabelError
from src.models.record import ImageRecord, Split
from src.services.split_service import SplitService


@pytest.fixture
def split_service():
    return SplitService()


def test_stratified_split_quality_task_sizes(split_service, make_records):
    records = make_records(negatives=215, positives=280)

    assignment = split_service.stratified_split(records, seed=42)

    assert assignment.sizes() == (317, 79, 99)


def test_stratified_split_single_class_follows_ratios(split_service, make_records):
    records = make_records(negatives=10, positives=0)

    assignment = split_service.stratified_split(records, ratios=(0.8, 0.1, 0.1))

    assert assignment.sizes() == (8, 1, 1)


def test_stratified_split_is_deterministic_and_seed_dependent(
    split_service, make_records
):
    records = make_records(negatives=40, positives=60)

    first = split_service.stratified_split(records, seed=3)
    second = split_service.stratified_split(list(reversed(records)), seed=3)
    other = split_service.stratified_split(records, seed=4)

    assert first.assignments == second.assignments
    assert first.assignments != other.assignments


def test_stratified_split_covers_every_record_once(split_service, make_records):
    records = make_records(negatives=33, positives=71)

    assignment = split_service.stratified_split(records, seed=11)

    assert sorted(assignment.assignments) == sorted(r.image_id for r in records)
    train, val, test = (set(assignment.ids_in(split)) for split in Split)
    assert not train & val and not train & test and not val & test


def test_stratified_split_class_counts_within_one_of_ratio(split_service, make_records):
    records = make_records(negatives=37, positives=58)
    ratios = (0.64, 0.16, 0.20)

    assignment = split_service.stratified_split(records, ratios=ratios, seed=5)
    labelled = [
        record.model_copy(update={"split": assignment.assignments[record.image_id]})
        for record in records
    ]

    for split, ratio in zip((Split.TRAIN, Split.VAL, Split.TEST), ratios):
        negatives, positives = split_service.class_distribution(labelled, 1, split)
        assert abs(negatives - ratio * 37) < 1
        assert abs(positives - ratio * 58) < 1


def test_stratified_split_rejects_class_smaller_than_split_count(
    split_service, make_records
):
    records = make_records(negatives=2, positives=20)

    with pytest.raises(InsufficientClassError):
        split_service.stratified_split(records)


def test_stratified_split_rejects_record_without_task_label(split_service, tmp_path):
    records = [
        ImageRecord(image_id="a", image_path=tmp_path / "a.png", task_labels={2: 1})
    ]

    with pytest.raises(MissingLabelError):
        split_service.stratified_split(records, task_id=1)


def test_stratified_split_rejects_ratios_not_summing_to_one(split_service, make_records):
    with pytest.raises(ValueError):
        split_service.stratified_split(make_records(5, 5), ratios=(0.5, 0.2, 0.2))


def test_apportion_assigns_every_item(split_service):
    counts = split_service.apportion(280, (0.64, 0.16, 0.20))

    assert counts == [179, 45, 56]


def test_class_distribution(split_service, make_records):
    records = make_records(negatives=3, positives=5)

    assert split_service.class_distribution(records, 1) == (3, 5)
    assert split_service.class_distribution(records, 2) == (0, 0)
    assert split_service.class_distribution([], 1) == (0, 0)


def test_class_distribution_per_split_of_quality_task(split_service, make_records):
    records = make_records(negatives=215, positives=280)
    assignment = split_service.stratified_split(records, seed=42)
    assigned = [
        record.model_copy(update={"split": assignment.assignments[record.image_id]})
        for record in records
    ]

    assert split_service.class_distribution(assigned, 1, Split.TRAIN) == (138, 179)
    assert split_service.class_distribution(assigned, 1, Split.VAL) == (34, 45)
    assert split_service.class_distribution(assigned, 1, Split.TEST) == (43, 56)


def test_class_distribution_of_balanced_dme_test_split(split_service, tmp_path):
    records = [
        ImageRecord(
            image_id=f"dme_{index:03d}",
            image_path=tmp_path / f"dme_{index:03d}.png",
            task_labels={3: index % 2},
        )
        for index in range(210)
    ]
    assignment = split_service.stratified_split(records, seed=42, task_id=3)
    assigned = [
        record.model_copy(update={"split": assignment.assignments[record.image_id]})
        for record in records
    ]

    assert split_service.class_distribution(assigned, 3, Split.TEST) == (21, 21)
    assert split_service.class_distribution(assigned, 3, Split.VAL) == (17, 17)
    assert split_service.class_distribution(assigned, 1) == (0, 0)
