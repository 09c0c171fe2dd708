"""Exception hierarchy shared by every xmodal module.

CLI exit-code mapping: ConfigError / ValidationError (and subclasses)
exit 1, FormatError and OS-level I/O errors exit 2.
"""


class XmodalError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(XmodalError):
    """Invalid parameter, flag, or configuration value."""


class ValidationError(XmodalError):
    """Data violates a declared invariant (range, finiteness, uniqueness)."""


class ShapeError(ValidationError):
    """Tensor dimensions disagree with the declared contract."""


class BoundsError(ValidationError):
    """Index outside its valid range."""


class BatchTooSmallError(ValidationError):
    """Batch statistics requested for a batch with fewer than 2 rows."""


class UndefinedCorrelationError(ValidationError):
    """Correlation requested for a sequence with zero variance."""


class MissingLabelError(ValidationError):
    """Join across tables failed for one or more labels."""

    def __init__(self, message: str, labels=()):
        super().__init__(message)
        self.labels = tuple(labels)


class FormatError(XmodalError):
    """File is not a valid container (bad magic, version, or corruption).

    ``offset`` is the byte position where parsing first failed, or None
    when the damage is only detectable via the content checksum.
    """

    def __init__(self, message: str, offset=None):
        super().__init__(message)
        self.offset = offset
