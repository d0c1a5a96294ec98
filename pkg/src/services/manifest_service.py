"""Manifest and split file service.
Handles reading and writing the labeled image manifest and the per-task split CSV.
"""

import logging
from pathlib import Path
from typing import Iterable, Sequence
import pandas as pd
from pydantic import ValidationError
from ..core.exceptions import (
    LabelValueError,
    MalformedManifestRowError,
    ManifestNotFoundError,
    MissingSplitError,
)
from ..models.record import TASK_IDS, ImageRecord, Split, SplitAssignment

logger = logging.getLogger(__name__)

MANIFEST_HEADER = ["image_id", "image_path", "task1_label", "task2_label", "task3_label"]
SPLIT_HEADER = ["image_id", "task_id", "split"]


def _read_table(path: Path, header: list[str]) -> pd.DataFrame:
    """Read a CSV as untrimmed strings, check its header row and index the body
    rows by their 1-based file row number. Missing trailing fields are NaN."""
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    except pd.errors.ParserError as exc:
        raise MalformedManifestRowError(f"{path.name}: {exc}") from exc

    if frame.empty or [str(value).strip() for value in frame.iloc[0]] != header:
        raise MalformedManifestRowError(f"Row 1: header must be {','.join(header)}")
    body = frame.iloc[1:].set_axis(header, axis=1)
    return body.set_axis(range(2, len(body) + 2), axis=0)


class ManifestService:
    """Service for the manifest CSV and the split CSV.
    Relative image paths in a manifest are resolved against the manifest directory.
    """

    @staticmethod
    def _parse_label(raw: str, row_number: int, column: str) -> int | None:
        value = raw.strip()
        if value == "":
            return None
        if value not in ("0", "1"):
            raise LabelValueError(
                f"Row {row_number}: {column} = {value!r} is not 0, 1 or empty."
            )
        return int(value)

    def load_manifest(self, path: Path) -> list[ImageRecord]:
        """Load one ImageRecord per manifest row.
        Rows without any label are rejected with the offending row number.
        """
        path = Path(path)
        if not path.is_file():
            raise ManifestNotFoundError(f"Manifest file not found: {path}")

        table = _read_table(path, MANIFEST_HEADER)
        short_rows = table.isna().any(axis=1)
        if short_rows.any():
            row_number = short_rows.idxmax()
            raise MalformedManifestRowError(
                f"Row {row_number}: expected {len(MANIFEST_HEADER)} columns, "
                f"found {int(table.loc[row_number].notna().sum())}."
            )

        records: list[ImageRecord] = []
        for row in table.map(str.strip).itertuples():
            labels = {
                task_id: self._parse_label(getattr(row, column), row.Index, column)
                for task_id, column in zip(TASK_IDS, MANIFEST_HEADER[2:])
            }
            if all(label is None for label in labels.values()):
                raise MalformedManifestRowError(f"Row {row.Index}: no label for any task.")

            resolved = Path(row.image_path)
            if not resolved.is_absolute():
                resolved = path.parent / resolved
            try:
                records.append(
                    ImageRecord(image_id=row.image_id, image_path=resolved, task_labels=labels)
                )
            except ValidationError as exc:
                raise MalformedManifestRowError(
                    f"Row {row.Index}: {exc.errors()[0]['msg']}"
                ) from exc

        logger.info("Loaded %d records from %s", len(records), path)
        return records

    @staticmethod
    def write_manifest(
        records: Iterable[ImageRecord], path: Path, relative_to: Path | None = None
    ) -> Path:
        """Write records in manifest format, optionally with paths relative to a directory."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = []
        for record in records:
            image_path = Path(record.image_path)
            if relative_to is not None:
                image_path = image_path.relative_to(relative_to)
            labels = [record.label_for(task_id) for task_id in TASK_IDS]
            rows.append(
                [record.image_id, image_path.as_posix()]
                + ["" if label is None else str(label) for label in labels]
            )
        pd.DataFrame(rows, columns=MANIFEST_HEADER).to_csv(
            path, index=False, lineterminator="\n"
        )
        return path

    @staticmethod
    def write_split_assignments(
        assignments: Sequence[SplitAssignment], path: Path
    ) -> Path:
        """Write the image_id,task_id,split CSV for one or more tasks."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = [
            [image_id, assignment.task_id, assignment.assignments[image_id].value]
            for assignment in assignments
            for image_id in sorted(assignment.assignments)
        ]
        pd.DataFrame(rows, columns=SPLIT_HEADER).to_csv(path, index=False, lineterminator="\n")
        return path

    @staticmethod
    def read_split_assignments(
        path: Path, task_id: int
    ) -> dict[str, Split]:
        """Read the split of every image for one task."""
        path = Path(path)
        if not path.is_file():
            raise MissingSplitError(f"Split file not found: {path}")

        result: dict[str, Split] = {}
        for row in _read_table(path, SPLIT_HEADER).itertuples():
            try:
                if int(row.task_id) != task_id:
                    continue
                result[row.image_id] = Split(row.split)
            except (TypeError, ValueError) as exc:
                raise MalformedManifestRowError(
                    f"Row {row.Index}: invalid split row "
                    f"{row.image_id},{row.task_id},{row.split}"
                ) from exc
        return result

    @staticmethod
    def assign_splits(
        records: Sequence[ImageRecord], task_id: int, splits: dict[str, Split]
    ) -> list[ImageRecord]:
        """Return the task's records carrying their split for that task."""
        return [
            record.model_copy(update={"split": splits[record.image_id]})
            for record in records
            if record.participates_in(task_id) and record.image_id in splits
        ]

    @staticmethod
    def records_for(
        records: Sequence[ImageRecord], task_id: int, split: Split
    ) -> list[ImageRecord]:
        return [
            record
            for record in records
            if record.participates_in(task_id) and record.split == split
        ]
