"""Exception hierarchy shared by every stage of the pipeline."""


class KernelFusionError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class IngestError(KernelFusionError):
    exit_code = 2


class ParseError(IngestError):
    """A frame file row could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(IngestError):
    """Frames disagree on shape, or the header does not match the layout."""


class DataError(IngestError):
    """Values violate a data invariant (non-finite samples, negative bins, ...)."""


class ChecksumError(IngestError):
    """A binary container failed its integrity check."""


class ConfigError(KernelFusionError):
    exit_code = 3


class ParameterError(ConfigError):
    """A numeric hyperparameter is outside its valid range."""


class VersionError(ConfigError):
    """A file was written by an unsupported format version."""


class DimensionError(KernelFusionError):
    exit_code = 3


class NumericalError(KernelFusionError):
    exit_code = 4
