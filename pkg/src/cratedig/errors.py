"""Exception types shared across the pipeline."""


class CratedigError(Exception):
    """Base class for all library errors."""


# --- audio I/O ---

class UnsupportedFormatError(CratedigError):
    """The file is not a container this library can decode."""


class CorruptStreamError(CratedigError):
    """The file claims a supported format but its stream is damaged."""


class InvalidRateError(CratedigError, ValueError):
    """Sample rate must be a positive integer."""


class RangeOutOfBoundsError(CratedigError, ValueError):
    """Requested time range falls outside the buffer."""


# --- features / boundaries ---

class TooShortError(CratedigError, ValueError):
    """Input audio is too short for the requested analysis."""


class TooFewFramesError(CratedigError, ValueError):
    """Feature matrix has fewer frames than the operation needs."""


class KernelTooLargeError(CratedigError, ValueError):
    """Novelty kernel exceeds the number of frames."""


# --- CSV import ---

class CsvParseError(CratedigError):
    """Malformed CSV row.  ``row`` is the 1-based line number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class UnknownLabelError(CsvParseError):
    """Window label outside {speech, music}."""


class NonMonotonicTimeError(CsvParseError):
    """Frame times must be strictly increasing."""


# --- embedding ---

class BackendFailureError(CratedigError):
    """The encoder backend raised during inference."""


class UnsupportedModalityError(CratedigError):
    """Backend does not support the requested modality."""


class EmptyPromptError(CratedigError, ValueError):
    """Text prompts must be nonempty."""


class CacheCorruptError(CratedigError):
    """Cache entry failed validation; callers recompute transparently."""


class MissingCacheEntryError(CratedigError):
    """Required cached embeddings are absent.  ``keys`` lists the misses."""

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = keys or []


# --- classifier ---

class DegenerateAnchorError(CratedigError):
    """Prompt embeddings cancel out; anchor has no direction."""

    def __init__(self, message: str, class_id: str | None = None):
        super().__init__(message)
        self.class_id = class_id


class DimMismatchError(CratedigError, ValueError):
    """Embedding dimensions disagree."""


class InvalidScaleError(CratedigError, ValueError):
    """Logit scale must be positive."""


# --- catalog ---

class UnsupportedVersionError(CratedigError):
    """Catalog file is from an unknown schema version."""


class SchemaViolationError(CratedigError):
    """Catalog file fails schema validation."""


class DurationTooLongError(CratedigError, ValueError):
    """Requested ablation duration exceeds the available audio."""
