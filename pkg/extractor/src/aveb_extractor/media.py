"""WAV and video decoding for fixed-length segment extraction."""

from __future__ import annotations

from fractions import Fraction

import cv2
import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import MediaError


def load_wav_mono(path: str) -> tuple[np.ndarray, int]:
    """Returns (float32 mono samples in [-1, 1], sample rate)."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise MediaError(f"cannot decode WAV {path}: {exc}") from None
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float32) - 128.0) / 128.0
    else:
        samples = data.astype(np.float32)
    return samples, int(rate)


def resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return samples
    ratio = Fraction(dst_rate, src_rate)
    return resample_poly(samples, ratio.numerator,
                         ratio.denominator).astype(np.float32)


class VideoReader:
    """Center-frame access over a video file, frames returned as RGB."""

    def __init__(self, path: str):
        self._capture = cv2.VideoCapture(path)
        if not self._capture.isOpened():
            raise MediaError(f"cannot open video {path}")
        self.fps = float(self._capture.get(cv2.CAP_PROP_FPS)) or 0.0
        self.frame_count = int(self._capture.get(cv2.CAP_PROP_FRAME_COUNT))
        if self.fps <= 0 or self.frame_count <= 0:
            raise MediaError(f"video {path} reports no frames")
        self.duration = self.frame_count / self.fps

    def frame_at(self, seconds: float) -> np.ndarray:
        index = min(int(seconds * self.fps), self.frame_count - 1)
        self._capture.set(cv2.CAP_PROP_POS_FRAMES, index)
        ok, frame = self._capture.read()
        if not ok:
            raise MediaError(f"cannot decode frame {index}")
        return cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)

    def close(self) -> None:
        self._capture.release()


def segment_count(audio_seconds: float, video_seconds: float,
                  segment_length: float) -> int:
    usable = min(audio_seconds, video_seconds)
    return int(usable // segment_length)
