"""Bridge from pretrained vision models to OODT feature/logit files."""

from .extract import (
    DecodeError,
    EmptyInput,
    ExtractionJob,
    ModelUnavailable,
    extract,
    registry_entries,
)

__version__ = "0.1.0"

__all__ = [
    "DecodeError",
    "EmptyInput",
    "ExtractionJob",
    "ModelUnavailable",
    "extract",
    "registry_entries",
    "__version__",
]
