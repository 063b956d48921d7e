"""
Exception hierarchy shared by every litmine subpackage.

Each exception carries the CLI exit code it maps to:
- 1: validation / integrity / not-found problems the caller can fix
- 2: I/O and network failures
"""

from typing import List, Optional


class LitmineError(Exception):
    """Base class for all litmine errors."""

    exit_code: int = 1


class ValidationError(LitmineError):
    """Input does not satisfy a documented precondition."""


class MetadataParseError(ValidationError):
    """Metadata CSV is unreadable or lacks required header columns."""


class ArticleSchemaError(ValidationError):
    """Article JSON violates the article schema."""

    def __init__(self, message: str, reasons: Optional[List[str]] = None):
        super().__init__(message)
        self.reasons = reasons or []

    def __str__(self) -> str:
        if self.reasons:
            return f"{self.args[0]}: {'; '.join(self.reasons)}"
        return str(self.args[0])


class CompatibilityError(ValidationError):
    """Model was built for a different feature space."""


class ConflictError(ValidationError):
    """Request collides with work already running (e.g. a second training job)."""


class NoModelError(ValidationError):
    """No "current" model is recorded in the ml_models bucket."""


class IntegrityError(LitmineError):
    """Checksum mismatch or corrupt persisted data."""


class ModelFormatError(LitmineError):
    """Model file is corrupt or truncated."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ModelFormatError):
    """Model file declares a format version this build cannot read."""


class NotFoundError(LitmineError):
    """Requested object, job or pointer does not exist."""


class StorageIOError(LitmineError):
    """Filesystem failure in the store or index backends."""

    exit_code = 2


class MasterConnectionError(LitmineError):
    """Master is unreachable or the wire protocol broke down."""

    exit_code = 2


class ExtractionError(LitmineError):
    """PDF extraction failed or no extractor is configured."""
