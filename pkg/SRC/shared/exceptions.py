"""Custom exceptions for the Y-Net pipeline."""

from typing import Optional


class YNetError(Exception):
    """Base exception for the Y-Net pipeline."""
    pass


class ValidationError(YNetError):
    """Raised when an argument value is outside its contract."""
    pass


class ShapeError(ValidationError):
    """Raised when tensor shapes do not agree."""
    pass


class ConfigurationError(ValidationError):
    """Raised when a model or run configuration is invalid."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ContractViolationError(YNetError):
    """Raised when a backward pass is requested without its forward cache."""
    pass


class CodecError(YNetError):
    """Raised when a PPM/PGM byte stream cannot be parsed."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class DatasetIOError(YNetError):
    """Raised when a dataset or report file cannot be read or written."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message}: {path}" if path else message)


class CheckpointError(YNetError):
    """Raised when a checkpoint is corrupt or does not match the model."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class GenerationError(YNetError):
    """Raised when a synthetic sample cannot be rendered inside its area bin."""
    pass


class NumericalError(YNetError):
    """Raised when training produces a non-finite loss."""
    pass
