"""Custom exception classes for the UWF screening pipeline.
Defines domain-specific exceptions that map to process exit codes
for clear and consistent error handling from the services up to the CLI.
"""

EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_TRAINING_DIVERGENCE = 4


class UWFScreenError(Exception):
    """Base exception class for all pipeline errors."""

    exit_code: int = 1
    default_detail: str = "Pipeline error."

    def __init__(self, detail: str | None = None) -> None:
        self.detail = detail or self.default_detail
        super().__init__(self.detail)


class ConfigError(UWFScreenError):
    """Raised when a run config cannot be parsed or fails validation."""

    exit_code = EXIT_CONFIG_ERROR
    default_detail = "Invalid run configuration."


class DataError(UWFScreenError):
    """Base class for problems with input data or stored artifacts."""

    exit_code = EXIT_DATA_ERROR
    default_detail = "Invalid input data."


class ManifestNotFoundError(DataError):
    """Raised when the manifest file does not exist."""

    default_detail = "Manifest file not found."


class MalformedManifestRowError(DataError):
    """Raised when a manifest row or header does not match the schema."""

    default_detail = "Malformed manifest row."


class LabelValueError(DataError):
    """Raised when a label is outside {0, 1, empty}."""

    default_detail = "Label must be 0, 1 or empty."


class EmptyManifestError(DataError):
    """Raised when a command needs records but the manifest has none."""

    default_detail = "Manifest contains no records."


class MissingLabelError(DataError):
    """Raised when a record lacks the label required for a task."""

    default_detail = "Record has no label for the requested task."


class InsufficientClassError(DataError):
    """Raised when a class has fewer records than the requested splits."""

    default_detail = "Not enough records in a class to fill every split."


class MissingSplitError(DataError):
    """Raised when a split file is required but has not been written."""

    default_detail = "Split file not found. Run the split command first."


class ImageDecodeError(DataError):
    """Raised when an image path is missing or cannot be decoded."""

    default_detail = "Image could not be decoded."


class ImageTooSmallError(DataError):
    """Raised when an image is smaller than the crop window."""

    default_detail = (
        "Image is smaller than the crop size. "
        "Set spatial.pad_small_images = true to pad before cropping."
    )


class EmptyImageError(DataError):
    """Raised when an operation receives an image with no pixels."""

    default_detail = "Image is empty."


class EmptyDatasetError(DataError):
    """Raised when a training set has no samples."""

    default_detail = "Training data is empty."


class SingleClassError(DataError):
    """Raised when a scored set or validation set contains only one class."""

    default_detail = "Both classes are required (AUROC is undefined otherwise)."


class DomainMismatchError(DataError):
    """Raised when inputs were produced in another domain than the model's."""

    default_detail = "Input domain does not match the model domain."


class RowOrderMismatchError(DataError):
    """Raised when feature matrices do not share the same image order."""

    default_detail = "Feature matrices are not aligned by image_id."


class MissingCheckpointError(DataError):
    """Raised when one or more checkpoints required by a command are absent."""

    default_detail = "Required checkpoint not found."


class MissingPredictionsError(DataError):
    """Raised when a declared evaluation row has no predictions."""

    default_detail = "Predictions missing for declared report rows."


class UnknownImageError(DataError):
    """Raised when a requested image_id is not among the task's records."""

    default_detail = "Image id not found in the task's records."


class UndefinedMetricError(DataError):
    """Raised after reporting when any metric in the report is undefined."""

    default_detail = "At least one metric in the report is undefined."


class ModelError(UWFScreenError):
    """Base class for model construction and explanation problems."""

    exit_code = EXIT_DATA_ERROR
    default_detail = "Model error."


class UnknownArchitectureError(ModelError):
    """Raised when an architecture id is not registered."""

    default_detail = "Unknown architecture id."


class MissingFoundationCheckpointError(ModelError):
    """Raised when the retinal foundation backbone has no encoder checkpoint."""

    default_detail = "retinal_foundation requires an encoder checkpoint path."


class StageOrderError(ModelError):
    """Raised when a training stage is run out of order or with a wrong config."""

    default_detail = "Training stage does not match the model state."


class LayerWithoutSpatialStructureError(ModelError):
    """Raised when Grad-CAM targets a layer whose output is not a spatial map."""

    default_detail = "Explanation layer has no spatial structure."


class NonSquareTokenGridError(ModelError):
    """Raised when patch tokens cannot be arranged on a square grid."""

    default_detail = "Patch token count is not a perfect square."


class TrainingDivergenceError(UWFScreenError):
    """Raised when the training loss becomes NaN or infinite."""

    exit_code = EXIT_TRAINING_DIVERGENCE
    default_detail = "Training diverged (non-finite loss)."
