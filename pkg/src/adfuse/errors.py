"""Typed errors shared across the package."""


class AdFuseError(Exception):
    """Base class for all adfuse errors."""


class ShapeError(AdFuseError):
    """Tensor or input dimensions do not match the declared contract."""


class NonFiniteError(AdFuseError):
    """A value that must be finite is NaN or infinite."""


class DegenerateBatchError(AdFuseError):
    """Batch statistics requested on a batch too small to define them."""


class DataFormatError(AdFuseError):
    """A file is malformed: bad magic, version, truncation, or field values."""


class VocabMismatchError(AdFuseError):
    """Encoder vocabulary does not match the model the caller supplied."""


class TrainingDivergedError(AdFuseError):
    """Training produced a non-finite loss."""


class ConfigError(AdFuseError):
    """Invalid configuration or arguments."""
