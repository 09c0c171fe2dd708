"""Extractor-specific errors; data/config errors reuse the xmodal types."""

from xmodal.errors import XmodalError


class SetupError(XmodalError):
    """Required model weights or packages are unavailable."""


class MediaError(XmodalError):
    """Media file cannot be opened or decoded at all."""
