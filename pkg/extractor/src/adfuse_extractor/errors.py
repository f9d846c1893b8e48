class ExtractionError(Exception):
    """Base class for extractor failures."""


class VideoDecodeError(ExtractionError):
    """The video cannot be opened or yields no frames."""


class ModelLoadError(ExtractionError):
    """A pinned model file is missing, corrupt, or fails its hash check."""


class JobFormatError(ExtractionError):
    """A job manifest line is malformed."""
