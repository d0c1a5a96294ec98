import pytest
from src.core.exceptions import (
    LabelValueError,
    MalformedManifestRowError,
    ManifestNotFoundError,
    MissingSplitError,
)
from src.models.record import ImageRecord, Split, SplitAssignment
from src.services.manifest_service import MANIFEST_HEADER, ManifestService

HEADER = ",".join(MANIFEST_HEADER) + "\n"


@pytest.fixture
def manifest_service():
    return ManifestService()


def write_csv(path, body):
    path.write_text(HEADER + body, encoding="utf-8")
    return path


def test_load_manifest_parses_labels_and_missing_labels(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "a,images/a.png,1,0,\nb,/abs/b.png,0,,\n")

    records = manifest_service.load_manifest(path)

    assert [record.image_id for record in records] == ["a", "b"]
    assert records[0].task_labels == {1: 1, 2: 0, 3: None}
    assert records[1].task_labels == {1: 0, 2: None, 3: None}
    assert records[0].image_path == tmp_path / "images" / "a.png"
    assert records[1].image_path.as_posix() == "/abs/b.png"


def test_load_manifest_with_only_header_returns_empty_list(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "")

    records = manifest_service.load_manifest(path)

    assert records == []


def test_load_manifest_rejects_label_outside_binary_with_row_number(
    tmp_path, manifest_service
):
    path = write_csv(tmp_path / "manifest.csv", "a,a.png,2,,\n")

    with pytest.raises(LabelValueError) as exc_info:
        manifest_service.load_manifest(path)

    assert "Row 2" in exc_info.value.detail


def test_load_manifest_rejects_row_without_any_label(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "a,a.png,1,,\nb,b.png,,,\n")

    with pytest.raises(MalformedManifestRowError) as exc_info:
        manifest_service.load_manifest(path)

    assert "Row 3" in exc_info.value.detail


def test_load_manifest_rejects_wrong_column_count(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "a,a.png,1\n")

    with pytest.raises(MalformedManifestRowError) as exc_info:
        manifest_service.load_manifest(path)

    assert exc_info.value.detail == "Row 2: expected 5 columns, found 3."


def test_load_manifest_rejects_extra_columns(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "a,a.png,1,,\nb,b.png,0,,,1\n")

    with pytest.raises(MalformedManifestRowError):
        manifest_service.load_manifest(path)


def test_load_manifest_keeps_ids_that_look_like_missing_values(tmp_path, manifest_service):
    path = write_csv(tmp_path / "manifest.csv", "NA, 007 ,1,,\n")

    records = manifest_service.load_manifest(path)

    assert records[0].image_id == "NA"
    assert records[0].image_path == tmp_path / "007"


def test_load_manifest_rejects_wrong_header(tmp_path, manifest_service):
    path = tmp_path / "manifest.csv"
    path.write_text("id,path,label\n", encoding="utf-8")

    with pytest.raises(MalformedManifestRowError):
        manifest_service.load_manifest(path)


def test_load_manifest_missing_file(tmp_path, manifest_service):
    with pytest.raises(ManifestNotFoundError) as exc_info:
        manifest_service.load_manifest(tmp_path / "absent.csv")

    assert exc_info.value.exit_code == 3


def test_write_then_load_manifest_keeps_records(tmp_path, manifest_service):
    records = [
        ImageRecord(
            image_id="x1", image_path=tmp_path / "x1.png", task_labels={1: 1, 2: 1, 3: 0}
        ),
        ImageRecord(image_id="x2", image_path=tmp_path / "x2.png", task_labels={1: 0}),
    ]

    path = manifest_service.write_manifest(records, tmp_path / "out" / "manifest.csv")

    assert manifest_service.load_manifest(path) == records


def test_split_file_round_trip_and_assignment(tmp_path, manifest_service):
    records = [
        ImageRecord(image_id="a", image_path=tmp_path / "a.png", task_labels={1: 0}),
        ImageRecord(image_id="b", image_path=tmp_path / "b.png", task_labels={1: 1}),
        ImageRecord(image_id="c", image_path=tmp_path / "c.png", task_labels={2: 1}),
    ]
    assignment = SplitAssignment(
        task_id=1,
        assignments={"a": Split.TRAIN, "b": Split.TEST},
        seed=42,
        ratios=(0.64, 0.16, 0.20),
    )
    path = manifest_service.write_split_assignments([assignment], tmp_path / "splits.csv")

    splits = manifest_service.read_split_assignments(path, task_id=1)
    assigned = manifest_service.assign_splits(records, 1, splits)

    assert splits == {"a": Split.TRAIN, "b": Split.TEST}
    assert [record.image_id for record in assigned] == ["a", "b"]
    assert [r.image_id for r in manifest_service.records_for(assigned, 1, Split.TEST)] == [
        "b"
    ]
    assert manifest_service.read_split_assignments(path, task_id=2) == {}


def test_read_split_assignments_missing_file(tmp_path, manifest_service):
    with pytest.raises(MissingSplitError):
        manifest_service.read_split_assignments(tmp_path / "splits.csv", task_id=1)


def test_read_split_assignments_rejects_unknown_split(tmp_path, manifest_service):
    path = tmp_path / "splits.csv"
    path.write_text("image_id,task_id,split\na,1,train\nb,1,holdout\n", encoding="utf-8")

    with pytest.raises(MalformedManifestRowError) as exc_info:
        manifest_service.read_split_assignments(path, task_id=1)

    assert exc_info.value.detail.startswith("Row 3")


def test_split_file_is_sorted_by_image_id_per_task(tmp_path, manifest_service):
    first = SplitAssignment(
        task_id=1, assignments={"b": Split.VAL, "a": Split.TRAIN}, seed=1, ratios=(0.64, 0.16, 0.20)
    )
    second = SplitAssignment(
        task_id=2, assignments={"c": Split.TEST}, seed=1, ratios=(0.64, 0.16, 0.20)
    )

    path = manifest_service.write_split_assignments([first, second], tmp_path / "splits.csv")

    assert path.read_text(encoding="utf-8") == (
        "image_id,task_id,split\na,1,train\nb,1,val\nc,2,test\n"
    )
