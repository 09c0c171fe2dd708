"""Paired audiovisual embedding datasets and their on-disk container.

Binary layout (little-endian throughout):

    magic   b"AVEB"
    version u32 = 1
    header  n_segments u64, d_a u32, L u32, S u32, d_w u32, N u32,
            presence flags u8 x 3 (audio, layers, visual)
    per segment:
            id   u16 length + UTF-8 bytes
            five alignment scores f32 (temporal, spatial, contextual,
            causality, visibility)
            split u8 (0 train, 1 val, 2 test)
            present tensors as f32 row-major, in order audio, layers, visual
    trailer u32 CRC32 over everything before it

The CRC trailer makes any byte-level corruption detectable; files written
by :func:`save_dataset` are byte-deterministic for equal inputs.  A
``<path>.manifest.jsonl`` sidecar mirrors the per-segment metadata for
human inspection; the binary file is authoritative.

Datasets are immutable after construction/load: treat segments and their
arrays as read-only.  Presence of each modality is uniform across a
dataset and recorded in the header.
"""

from __future__ import annotations

import enum
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FormatError, ValidationError

MAGIC = b"AVEB"
VERSION = 1

_HEADER = struct.Struct("<Q5I3B")
_ID_LEN = struct.Struct("<H")
_SCORES = struct.Struct("<5f")
_SPLIT = struct.Struct("<B")
_CRC = struct.Struct("<I")

SCORE_NAMES = ("temporal", "spatial", "contextual", "causality", "visibility")

# Width of one visual token row; fixed by the CLIP-style grid contract.
TOKEN_DIM = 1024


class Split(enum.IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2

    @classmethod
    def parse(cls, name: str) -> "Split":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ConfigError(f"unknown split {name!r}") from None


@dataclass(frozen=True)
class AlignmentScores:
    """Five ingested alignment-dimension scores, each in [0, 10]."""

    temporal: float
    spatial: float
    contextual: float
    causality: float
    visibility: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.temporal, self.spatial, self.contextual,
                self.causality, self.visibility)

    def overall(self) -> float:
        """Aggregate score used for filtering: arithmetic mean of the five."""
        return sum(self.as_tuple()) / 5.0

    def validate(self) -> None:
        for name, value in zip(SCORE_NAMES, self.as_tuple()):
            if not np.isfinite(value) or not 0.0 <= value <= 10.0:
                raise ValidationError(
                    f"alignment score {name}={value!r} outside [0, 10]")


@dataclass(frozen=True)
class SegmentMeta:
    id: str
    scores: AlignmentScores
    split: Split


@dataclass(frozen=True)
class Segment:
    """One paired record; tensor fields may be None per the dataset header."""

    meta: SegmentMeta
    audio: np.ndarray | None = None    # (d_a,) f32
    layers: np.ndarray | None = None   # (L, S, d_w) f32
    visual: np.ndarray | None = None   # (N + 1, 1024) f32, row 0 = CLS


@dataclass(frozen=True)
class DatasetDims:
    """Header dimensions; zero for absent modalities."""

    d_a: int = 0
    L: int = 0
    S: int = 0
    d_w: int = 0
    N: int = 0
    has_audio: bool = False
    has_layers: bool = False
    has_visual: bool = False


@dataclass(frozen=True)
class EmbeddingDataset:
    dims: DatasetDims
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        self.validate()

    def __len__(self) -> int:
        return len(self.segments)

    def validate(self) -> None:
        d = self.dims
        if not (d.has_audio or d.has_layers or d.has_visual):
            raise ValidationError("dataset declares no modality")
        if d.has_audio and d.d_a < 1:
            raise ValidationError("audio present but d_a < 1")
        if d.has_layers and (d.L < 1 or d.S < 1 or d.d_w < 1):
            raise ValidationError("layer stacks present but L/S/d_w < 1")
        if d.has_visual and d.N < 0:
            raise ValidationError("visual present but N < 0")
        seen: set[str] = set()
        for seg in self.segments:
            if seg.meta.id in seen:
                raise ValidationError(f"duplicate segment id {seg.meta.id!r}")
            seen.add(seg.meta.id)
            seg.meta.scores.validate()
            self._check_tensor(seg.meta.id, "audio", seg.audio,
                               d.has_audio, (d.d_a,))
            self._check_tensor(seg.meta.id, "layers", seg.layers,
                               d.has_layers, (d.L, d.S, d.d_w))
            self._check_tensor(seg.meta.id, "visual", seg.visual,
                               d.has_visual, (d.N + 1, TOKEN_DIM))

    @staticmethod
    def _check_tensor(seg_id, name, value, expected_present, shape):
        if not expected_present:
            if value is not None:
                raise ValidationError(
                    f"segment {seg_id!r} carries {name} but header says absent")
            return
        if value is None:
            raise ValidationError(f"segment {seg_id!r} missing {name}")
        if value.shape != shape:
            raise ValidationError(
                f"segment {seg_id!r} {name} shape {value.shape} != {shape}")
        if not np.all(np.isfinite(value)):
            raise ValidationError(f"segment {seg_id!r} {name} has non-finite values")

    def subset(self, split: Split) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if s.meta.split == split)


def datasets_equal(a: EmbeddingDataset, b: EmbeddingDataset) -> bool:
    """Structural equality: same dims, metadata, and tensor values."""
    if a.dims != b.dims or len(a) != len(b):
        return False
    for sa, sb in zip(a.segments, b.segments):
        if sa.meta != sb.meta:
            return False
        for ta, tb in ((sa.audio, sb.audio), (sa.layers, sb.layers),
                       (sa.visual, sb.visual)):
            if (ta is None) != (tb is None):
                return False
            if ta is not None and not np.array_equal(ta, tb):
                return False
    return True


# ---------------------------------------------------------------------------
# Serialization


def _tensor_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _encode(ds: EmbeddingDataset) -> bytes:
    d = ds.dims
    parts = [MAGIC, struct.pack("<I", VERSION),
             _HEADER.pack(len(ds.segments), d.d_a, d.L, d.S, d.d_w, d.N,
                          int(d.has_audio), int(d.has_layers), int(d.has_visual))]
    for seg in ds.segments:
        ident = seg.meta.id.encode("utf-8")
        if len(ident) > 0xFFFF:
            raise ValidationError(f"segment id too long: {seg.meta.id[:32]!r}...")
        parts.append(_ID_LEN.pack(len(ident)))
        parts.append(ident)
        parts.append(_SCORES.pack(*seg.meta.scores.as_tuple()))
        parts.append(_SPLIT.pack(int(seg.meta.split)))
        for tensor in (seg.audio, seg.layers, seg.visual):
            if tensor is not None:
                parts.append(_tensor_bytes(tensor))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-xmodal-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".manifest.jsonl"


def _manifest_bytes(ds: EmbeddingDataset) -> bytes:
    d = ds.dims
    lines = [json.dumps({
        "kind": "header",
        "n_segments": len(ds.segments),
        "dims": {"d_a": d.d_a, "L": d.L, "S": d.S, "d_w": d.d_w, "N": d.N},
        "modalities": {"audio": d.has_audio, "layers": d.has_layers,
                       "visual": d.has_visual},
        # Filtering aggregates the five dimension scores by arithmetic mean
        # and keeps segments strictly above the threshold.
        "alignment_aggregate": "mean(temporal,spatial,contextual,causality,visibility) > threshold",
    }, sort_keys=True)]
    for seg in ds.segments:
        lines.append(json.dumps({
            "id": seg.meta.id,
            "alignment_scores": {name: float(value) for name, value in
                                 zip(SCORE_NAMES, seg.meta.scores.as_tuple())},
            "split": seg.meta.split.name.lower(),
        }, sort_keys=True))
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_dataset(ds: EmbeddingDataset, path: str | os.PathLike) -> None:
    """Write the binary container plus its JSONL manifest sidecar.

    Output is byte-deterministic for equal datasets.  Invariants are
    re-checked before anything touches the filesystem.
    """
    ds.validate()
    atomic_write(path, _encode(ds))
    atomic_write(manifest_path(path), _manifest_bytes(ds))


class _Reader:
    """Byte cursor that raises FormatError with the failing offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file: expected {what}", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))


def load_dataset(path: str | os.PathLike) -> EmbeddingDataset:
    """Load and fully validate a dataset; never returns a partial dataset."""
    with open(path, "rb") as handle:
        raw = handle.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(raw) < 8:
        raise FormatError("truncated file: expected version", offset=len(raw))
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if len(raw) < 8 + _HEADER.size + _CRC.size:
        raise FormatError("truncated file: expected header", offset=len(raw))
    (stored_crc,) = _CRC.unpack(raw[-_CRC.size:])
    if zlib.crc32(raw[:-_CRC.size]) != stored_crc:
        raise FormatError("content checksum mismatch", offset=None)

    reader = _Reader(raw[:-_CRC.size])
    reader.pos = 8
    n_seg, d_a, L, S, d_w, N, f_audio, f_layers, f_visual = reader.unpack(
        _HEADER, "header")
    for flag in (f_audio, f_layers, f_visual):
        if flag not in (0, 1):
            raise FormatError(f"invalid presence flag {flag}",
                              offset=reader.pos - 3)
    dims = DatasetDims(d_a=d_a, L=L, S=S, d_w=d_w, N=N,
                       has_audio=bool(f_audio), has_layers=bool(f_layers),
                       has_visual=bool(f_visual))

    segments = []
    for _ in range(n_seg):
        (id_len,) = reader.unpack(_ID_LEN, "id length")
        id_start = reader.pos
        try:
            ident = reader.take(id_len, "id bytes").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("segment id is not valid UTF-8",
                              offset=id_start) from None
        scores = AlignmentScores(*reader.unpack(_SCORES, "alignment scores"))
        (split_code,) = reader.unpack(_SPLIT, "split byte")
        if split_code not in (0, 1, 2):
            raise FormatError(f"invalid split byte {split_code}",
                              offset=reader.pos - 1)
        audio = layers = visual = None
        if dims.has_audio:
            audio = np.frombuffer(reader.take(4 * d_a, "audio tensor"),
                                  dtype="<f4").copy()
        if dims.has_layers:
            count = L * S * d_w
            layers = np.frombuffer(reader.take(4 * count, "layer stack"),
                                   dtype="<f4").reshape(L, S, d_w).copy()
        if dims.has_visual:
            count = (N + 1) * TOKEN_DIM
            visual = np.frombuffer(reader.take(4 * count, "visual grid"),
                                   dtype="<f4").reshape(N + 1, TOKEN_DIM).copy()
        segments.append(Segment(
            meta=SegmentMeta(id=ident, scores=scores, split=Split(split_code)),
            audio=audio, layers=layers, visual=visual))
    if reader.pos != len(reader.data):
        raise FormatError("trailing bytes after last record", offset=reader.pos)
    # Construction validates every invariant; nothing escapes half-built.
    return EmbeddingDataset(dims=dims, segments=tuple(segments))


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale generator for paired audio/CLS data with a known signal.

    Per segment: CLS token ``c`` is a unit Gaussian draw, L2-normalized.
    The audio embedding mixes a fixed seed-derived linear image of ``c``
    with Gaussian noise::

        z_a = (1 - noise_level) * G @ c + noise_level * eps

    so noise_level 0 is a pure (invertible) signal and noise_level 1 is
    fully uncorrelated with ``c``.  When d_a == 1024, G is the identity.
    Patch rows are ``c`` plus small per-patch noise.
    """

    n_segments: int
    d_a: int = 512
    N: int = 16
    noise_level: float = 0.5
    seed: int = 0
    patch_noise: float = 0.1
    # Split assignment by index: first 80% train, next 10% val, rest test.
    train_fraction: float = 0.8
    val_fraction: float = 0.1

    def validate(self) -> None:
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        if self.d_a < 1:
            raise ConfigError("d_a must be >= 1")
        if self.N < 0:
            raise ConfigError("N must be >= 0")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ConfigError(f"noise_level {self.noise_level} outside [0, 1]")
        if not (0.0 <= self.train_fraction and 0.0 <= self.val_fraction
                and self.train_fraction + self.val_fraction <= 1.0):
            raise ConfigError("invalid split fractions")


def generate_synthetic(cfg: SynthConfig) -> EmbeddingDataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if cfg.d_a == TOKEN_DIM:
        mix = np.eye(cfg.d_a)
    else:
        mix = rng.standard_normal((cfg.d_a, TOKEN_DIM)) / np.sqrt(cfg.d_a)

    n_train = int(round(cfg.n_segments * cfg.train_fraction))
    n_val = int(round(cfg.n_segments * cfg.val_fraction))
    rho = cfg.noise_level

    segments = []
    for i in range(cfg.n_segments):
        cls = rng.standard_normal(TOKEN_DIM)
        cls /= np.linalg.norm(cls)
        eps = rng.standard_normal(cfg.d_a) / np.sqrt(cfg.d_a)
        audio = ((1.0 - rho) * (mix @ cls) + rho * eps).astype(np.float32)
        grid = np.empty((cfg.N + 1, TOKEN_DIM))
        grid[0] = cls
        if cfg.N:
            grid[1:] = cls + cfg.patch_noise * (
                rng.standard_normal((cfg.N, TOKEN_DIM)) / np.sqrt(TOKEN_DIM))
        scores = rng.uniform(0.0, 10.0, size=5)
        if i < n_train:
            split = Split.TRAIN
        elif i < n_train + n_val:
            split = Split.VAL
        else:
            split = Split.TEST
        segments.append(Segment(
            meta=SegmentMeta(
                id=f"seg-{i:06d}",
                scores=AlignmentScores(*(float(np.float32(s)) for s in scores)),
                split=split),
            audio=audio,
            visual=grid.astype(np.float32)))

    dims = DatasetDims(d_a=cfg.d_a, N=cfg.N, has_audio=True, has_visual=True)
    return EmbeddingDataset(dims=dims, segments=tuple(segments))


def filter_by_alignment(ds: EmbeddingDataset, threshold: float) -> EmbeddingDataset:
    """Keep segments whose mean alignment score is strictly above threshold."""
    if not 0.0 <= threshold <= 10.0:
        raise ConfigError(f"threshold {threshold} outside [0, 10]")
    kept = tuple(s for s in ds.segments
                 if s.meta.scores.overall() > threshold)
    return replace(ds, segments=kept)
