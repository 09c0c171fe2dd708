"""Export frozen-encoder embeddings into the xmodal AVEB container."""

from .config import AUDIO_ENCODERS, ExtractorConfig
from .errors import MediaError, SetupError
from .pipeline import ExtractionResult, extract

__version__ = "0.1.0"
