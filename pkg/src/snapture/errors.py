"""Exception hierarchy shared across the package."""


class SnaptureError(Exception):
    """Base class for all package-specific errors."""


class InvalidChannelCount(SnaptureError):
    """Frame has the wrong number of channels for the requested operation."""


class DimensionMismatch(SnaptureError):
    """Two frames or masks that must share dimensions do not."""


class WindowTooLarge(SnaptureError):
    """SSIM window does not fit inside the frame."""


class SequenceTooShort(SnaptureError):
    """Gesture sequence has fewer frames than the operation requires."""


class InvalidRegion(SnaptureError):
    """Degenerate (zero-area) or out-of-bounds crop region."""


class NoHandDetected(SnaptureError):
    """No candidate blob survived filtering during snapshot extraction."""


class EmptyCorpus(SnaptureError):
    """Threshold calibration was given no profiles."""


class ManifestParseError(SnaptureError):
    """Malformed manifest row; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"manifest row {row}: {message}")
        self.row = row


class StratificationError(SnaptureError):
    """A class has too few samples to be split as requested."""


class ShapeError(SnaptureError):
    """Tensor shapes are inconsistent for the requested operation."""


class DegenerateBatch(SnaptureError):
    """Batch normalization in train mode needs at least two samples."""


class LabelOutOfRange(SnaptureError):
    """Class index outside the configured class count."""


class GraphStateError(SnaptureError):
    """Backward invoked without a live forward graph."""


class TrainingDiverged(SnaptureError):
    """Non-finite loss encountered; carries the epoch index."""

    def __init__(self, epoch: int, message: str = ""):
        super().__init__(message or f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class ConfigError(SnaptureError):
    """Invalid model, generator, or CLI configuration."""
