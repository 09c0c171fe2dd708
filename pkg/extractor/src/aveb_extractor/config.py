"""Extraction run configuration."""

from __future__ import annotations

from dataclasses import dataclass

from xmodal.errors import ConfigError

WHISPER_ENCODERS = ("whisper-tiny", "whisper-base", "whisper-small",
                    "whisper-medium")
POOLED_ENCODERS = ("clap", "audioclip", "wav2clip", "imagebind")
AUDIO_ENCODERS = WHISPER_ENCODERS + POOLED_ENCODERS


@dataclass(frozen=True)
class ExtractorConfig:
    audio_encoder: str
    encoder_path: str           # local directory (or hub id) for the audio model
    clip_path: str              # local directory (or hub id) for the vision model
    audio_path: str             # WAV file
    video_path: str             # any container OpenCV can open
    out_path: str
    segment_length: float = 3.0
    split: str = "test"
    default_score: float = 5.0
    scores_path: str | None = None   # optional JSONL: {"id": ..., five scores}
    max_segments: int | None = None
    device: str = "cpu"

    def validate(self) -> None:
        if self.audio_encoder not in AUDIO_ENCODERS:
            raise ConfigError(
                f"unknown audio encoder {self.audio_encoder!r}; "
                f"choose one of {', '.join(AUDIO_ENCODERS)}")
        if self.segment_length <= 0:
            raise ConfigError("segment_length must be > 0")
        if not 0.0 <= self.default_score <= 10.0:
            raise ConfigError("default_score must lie in [0, 10]")
        if self.split not in ("train", "val", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.max_segments is not None and self.max_segments < 1:
            raise ConfigError("max_segments must be >= 1")
