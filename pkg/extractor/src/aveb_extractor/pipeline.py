"""Drive encoders over fixed-length media segments into an AVEB dataset.

The output file is written with the primary toolkit's store API, so every
container invariant is enforced before bytes hit disk, and the result
loads back bit-exactly.  A ``<out>.extraction.json`` sidecar records the
encoder/model provenance and any per-segment decode skips.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
import transformers

from xmodal.errors import ConfigError, ValidationError
from xmodal.store import (AlignmentScores, DatasetDims, EmbeddingDataset,
                          Segment, SegmentMeta, Split, atomic_write,
                          save_dataset)

from .config import ExtractorConfig
from .encoders import (ClipGridEncoder, WhisperStackEncoder,
                       make_audio_encoder)
from .errors import MediaError
from .media import VideoReader, load_wav_mono, resample, segment_count


@dataclass(frozen=True)
class ExtractionResult:
    out_path: str
    n_segments: int
    skipped: tuple[str, ...]


def _load_scores(path: str | None, default: float):
    table = {}
    if path is not None:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                table[record["id"]] = AlignmentScores(
                    temporal=record["temporal"], spatial=record["spatial"],
                    contextual=record["contextual"],
                    causality=record["causality"],
                    visibility=record["visibility"])
    fallback = AlignmentScores(default, default, default, default, default)
    return table, fallback


def extract(cfg: ExtractorConfig) -> ExtractionResult:
    cfg.validate()
    audio_encoder = make_audio_encoder(cfg.audio_encoder, cfg.encoder_path,
                                       device=cfg.device)
    vision = ClipGridEncoder(cfg.clip_path, device=cfg.device)

    samples, rate = load_wav_mono(cfg.audio_path)
    samples = resample(samples, rate, audio_encoder.sample_rate())
    audio_seconds = samples.shape[0] / audio_encoder.sample_rate()
    video = VideoReader(cfg.video_path)

    total = segment_count(audio_seconds, video.duration, cfg.segment_length)
    if cfg.max_segments is not None:
        total = min(total, cfg.max_segments)
    if total < 1:
        raise ConfigError(
            f"media too short: {min(audio_seconds, video.duration):.2f}s "
            f"of usable overlap for {cfg.segment_length}s segments")

    whisper_mode = isinstance(audio_encoder, WhisperStackEncoder)
    scores, fallback = _load_scores(cfg.scores_path, cfg.default_score)
    split = Split.parse(cfg.split)
    stem = os.path.splitext(os.path.basename(cfg.audio_path))[0]

    segments = []
    skipped = []
    window = int(round(cfg.segment_length * audio_encoder.sample_rate()))
    for index in range(total):
        seg_id = f"{stem}-{index:04d}"
        try:
            frame = video.frame_at((index + 0.5) * cfg.segment_length)
            grid = vision.grid(frame)
            chunk = samples[index * window:(index + 1) * window]
            if whisper_mode:
                layers = audio_encoder.stack(chunk, cfg.segment_length)
                audio_vec = None
            else:
                layers = None
                audio_vec = audio_encoder.embed(chunk)
        except MediaError as exc:
            skipped.append(f"{seg_id}: {exc}")
            continue
        if not np.all(np.isfinite(grid)) or (
                layers is not None and not np.all(np.isfinite(layers))) or (
                audio_vec is not None and not np.all(np.isfinite(audio_vec))):
            skipped.append(f"{seg_id}: non-finite encoder output")
            continue
        segments.append(Segment(
            meta=SegmentMeta(id=seg_id, scores=scores.get(seg_id, fallback),
                             split=split),
            audio=audio_vec, layers=layers, visual=grid))
    video.close()

    if not segments:
        raise ValidationError("every segment was skipped; nothing to write")

    first = segments[0]
    dims = DatasetDims(
        d_a=first.audio.shape[0] if first.audio is not None else 0,
        L=first.layers.shape[0] if first.layers is not None else 0,
        S=first.layers.shape[1] if first.layers is not None else 0,
        d_w=first.layers.shape[2] if first.layers is not None else 0,
        N=first.visual.shape[0] - 1,
        has_audio=first.audio is not None,
        has_layers=first.layers is not None,
        has_visual=True)
    save_dataset(EmbeddingDataset(dims=dims, segments=tuple(segments)),
                 cfg.out_path)

    provenance = {
        "audio_encoder": cfg.audio_encoder,
        "encoder_path": cfg.encoder_path,
        "clip_path": cfg.clip_path,
        "segment_length": cfg.segment_length,
        "torch_version": torch.__version__,
        "transformers_version": transformers.__version__,
        "skipped": skipped,
    }
    atomic_write(cfg.out_path + ".extraction.json",
                 (json.dumps(provenance, sort_keys=True, indent=2) + "\n")
                 .encode("utf-8"))
    return ExtractionResult(out_path=cfg.out_path, n_segments=len(segments),
                            skipped=tuple(skipped))
