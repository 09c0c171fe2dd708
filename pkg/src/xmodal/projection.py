"""The audio-to-visual mapping: trained 3-block MLP and zero-pad baseline.

Forward pass (per input vector z of length d_a)::

    f = W3 @ g(LN2(W2 @ g(LN1(W1 @ z + b1)) + b2)) + b3

with g the exact Gaussian-CDF GELU and LN per-vector layer normalization
(eps 1e-5) with learnable gain/bias.  In train mode, inverted dropout is
applied after each GELU so inference needs no rescaling.  All internal
math runs in float64; parameters are stored float32.

Parameter container layout (magic ``AVEP``)::

    magic b"AVEP", version u32 = 1, d_a u32, hidden u32, dropout f32,
    tensors f32 little-endian in declaration order
    (w1, b1, ln1_gain, ln1_bias, w2, b2, ln2_gain, ln2_bias, w3, b3),
    u32 CRC32 trailer.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, FormatError, ShapeError, ValidationError
from .store import atomic_write

OUT_DIM = 1024
LN_EPS = 1e-5

PARAMS_MAGIC = b"AVEP"
PARAMS_VERSION = 1

TENSOR_NAMES = ("w1", "b1", "ln1_gain", "ln1_bias",
                "w2", "b2", "ln2_gain", "ln2_bias", "w3", "b3")


@dataclass(frozen=True)
class ProjectionParams:
    w1: np.ndarray        # (hidden, d_a)
    b1: np.ndarray        # (hidden,)
    ln1_gain: np.ndarray  # (hidden,)
    ln1_bias: np.ndarray  # (hidden,)
    w2: np.ndarray        # (hidden, hidden)
    b2: np.ndarray        # (hidden,)
    ln2_gain: np.ndarray  # (hidden,)
    ln2_bias: np.ndarray  # (hidden,)
    w3: np.ndarray        # (OUT_DIM, hidden)
    b3: np.ndarray        # (OUT_DIM,)
    dropout_rate: float = 0.1

    def __post_init__(self):
        hidden, d_a = self.w1.shape if self.w1.ndim == 2 else (0, 0)
        if hidden < 1 or d_a < 1:
            raise ValidationError(f"w1 must be (hidden, d_a), got {self.w1.shape}")
        expected = {
            "b1": (hidden,), "ln1_gain": (hidden,), "ln1_bias": (hidden,),
            "w2": (hidden, hidden), "b2": (hidden,),
            "ln2_gain": (hidden,), "ln2_bias": (hidden,),
            "w3": (OUT_DIM, hidden), "b3": (OUT_DIM,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(f"{name} shape {arr.shape} != {shape}")
        for name in TENSOR_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite values")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate {self.dropout_rate} outside [0, 1)")

    @property
    def d_a(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def as_float64(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).astype(np.float64)
                for name in TENSOR_NAMES}


def init_projection(d_a: int, seed: int, hidden: int = OUT_DIM,
                    dropout_rate: float = 0.1) -> ProjectionParams:
    """Uniform fan-in initialization (bound 1/sqrt(fan_in)); zero biases,
    unit normalization gains.  Deterministic for a given seed."""
    if d_a < 1:
        raise ConfigError("d_a must be >= 1")
    if hidden < 1:
        raise ConfigError("hidden must be >= 1")
    rng = np.random.default_rng(seed)

    def uniform(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(np.float32)

    return ProjectionParams(
        w1=uniform(hidden, d_a),
        b1=np.zeros(hidden, dtype=np.float32),
        ln1_gain=np.ones(hidden, dtype=np.float32),
        ln1_bias=np.zeros(hidden, dtype=np.float32),
        w2=uniform(hidden, hidden),
        b2=np.zeros(hidden, dtype=np.float32),
        ln2_gain=np.ones(hidden, dtype=np.float32),
        ln2_bias=np.zeros(hidden, dtype=np.float32),
        w3=uniform(OUT_DIM, hidden),
        b3=np.zeros(OUT_DIM, dtype=np.float32),
        dropout_rate=dropout_rate,
    )


def param_count(params: ProjectionParams) -> int:
    """Exact count of trainable scalars, normalization gains/biases included."""
    return sum(int(t.size) for t in params.tensors().values())


def pad_or_truncate(z_a: np.ndarray) -> np.ndarray:
    """Parameter-free dimensionality matching to OUT_DIM (zero-pad / cut)."""
    z_a = np.asarray(z_a)
    if z_a.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {z_a.shape}")
    d = z_a.shape[0]
    out = np.zeros(OUT_DIM, dtype=np.float32)
    out[:min(d, OUT_DIM)] = z_a[:OUT_DIM]
    return out


# ---------------------------------------------------------------------------
# float64 numerical core (shared with the training module)

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def draw_dropout_masks(hidden: int, batch: int, rate: float, rng) -> tuple:
    """Two inverted-dropout masks, values 0 or 1/(1-rate); ones if rate 0."""
    if rate == 0.0:
        ones = np.ones((batch, hidden))
        return ones, ones.copy()
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    keep = 1.0 - rate
    m1 = (rng.random((batch, hidden)) < keep) / keep
    m2 = (rng.random((batch, hidden)) < keep) / keep
    return m1, m2


def _layer_norm(a: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = a.mean(axis=1, keepdims=True)
    var = ((a - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    x_hat = (a - mu) * inv_std
    return gain * x_hat + bias, x_hat, inv_std


def _layer_norm_backward(d_out, x_hat, inv_std, gain):
    d_gain = (d_out * x_hat).sum(axis=0)
    d_bias = d_out.sum(axis=0)
    d_xhat = d_out * gain
    da = inv_std * (d_xhat - d_xhat.mean(axis=1, keepdims=True)
                    - x_hat * (d_xhat * x_hat).mean(axis=1, keepdims=True))
    return da, d_gain, d_bias


def forward_batch(tensors: dict, X: np.ndarray, masks: tuple | None = None):
    """float64 forward over a batch X (B, d_a) -> (F (B, OUT_DIM), cache)."""
    if masks is None:
        ones = np.ones((X.shape[0], tensors["w1"].shape[0]))
        masks = (ones, ones)
    m1, m2 = masks
    a1 = X @ tensors["w1"].T + tensors["b1"]
    l1, xh1, inv1 = _layer_norm(a1, tensors["ln1_gain"], tensors["ln1_bias"])
    h1 = gelu(l1)
    d1 = h1 * m1
    a2 = d1 @ tensors["w2"].T + tensors["b2"]
    l2, xh2, inv2 = _layer_norm(a2, tensors["ln2_gain"], tensors["ln2_bias"])
    h2 = gelu(l2)
    d2 = h2 * m2
    F = d2 @ tensors["w3"].T + tensors["b3"]
    cache = {"X": X, "l1": l1, "xh1": xh1, "inv1": inv1, "d1": d1,
             "l2": l2, "xh2": xh2, "inv2": inv2, "d2": d2,
             "m1": m1, "m2": m2}
    return F, cache


def backward_batch(tensors: dict, cache: dict, dF: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every tensor, given dLoss/dF."""
    grads = {}
    grads["w3"] = dF.T @ cache["d2"]
    grads["b3"] = dF.sum(axis=0)
    dd2 = dF @ tensors["w3"]
    dl2 = dd2 * cache["m2"] * gelu_grad(cache["l2"])
    da2, grads["ln2_gain"], grads["ln2_bias"] = _layer_norm_backward(
        dl2, cache["xh2"], cache["inv2"], tensors["ln2_gain"])
    grads["w2"] = da2.T @ cache["d1"]
    grads["b2"] = da2.sum(axis=0)
    dd1 = da2 @ tensors["w2"]
    dl1 = dd1 * cache["m1"] * gelu_grad(cache["l1"])
    da1, grads["ln1_gain"], grads["ln1_bias"] = _layer_norm_backward(
        dl1, cache["xh1"], cache["inv1"], tensors["ln1_gain"])
    grads["w1"] = da1.T @ cache["X"]
    grads["b1"] = da1.sum(axis=0)
    return grads


def project_batch(params: ProjectionParams, Z: np.ndarray, mode: str = "infer",
                  rng=None) -> np.ndarray:
    """Map a batch (B, d_a) to (B, OUT_DIM) float32."""
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[1] != params.d_a:
        raise ShapeError(f"expected (B, {params.d_a}) input, got {Z.shape}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"unknown mode {mode!r}")
    masks = None
    if mode == "train" and params.dropout_rate > 0.0:
        masks = draw_dropout_masks(params.hidden, Z.shape[0],
                                   params.dropout_rate, rng)
    F, _ = forward_batch(params.as_float64(), Z.astype(np.float64), masks)
    return F.astype(np.float32)


def project(params: ProjectionParams, z_a: np.ndarray, mode: str = "infer",
            rng=None) -> np.ndarray:
    """Map one audio embedding (d_a,) to a 1024-dim visual-space vector."""
    z_a = np.asarray(z_a)
    if z_a.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {z_a.shape}")
    return project_batch(params, z_a[None, :], mode=mode, rng=rng)[0]


# ---------------------------------------------------------------------------
# Serialization

_PARAM_HEADER = struct.Struct("<2If")


def params_to_bytes(params: ProjectionParams) -> bytes:
    parts = [PARAMS_MAGIC, struct.pack("<I", PARAMS_VERSION),
             _PARAM_HEADER.pack(params.d_a, params.hidden,
                                params.dropout_rate)]
    for name in TENSOR_NAMES:
        parts.append(np.ascontiguousarray(getattr(params, name),
                                          dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_params(params: ProjectionParams, path: str | os.PathLike) -> None:
    atomic_write(path, params_to_bytes(params))


def load_params(path: str | os.PathLike) -> ProjectionParams:
    with open(path, "rb") as handle:
        raw = handle.read()
    if raw[:4] != PARAMS_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {PARAMS_MAGIC!r}",
                          offset=0)
    if len(raw) < 8 + _PARAM_HEADER.size + 4:
        raise FormatError("truncated parameter file", offset=len(raw))
    (version,) = struct.unpack("<I", raw[4:8])
    if version != PARAMS_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise FormatError("content checksum mismatch", offset=None)
    d_a, hidden, dropout = _PARAM_HEADER.unpack_from(raw, 8)
    pos = 8 + _PARAM_HEADER.size
    shapes = {
        "w1": (hidden, d_a), "b1": (hidden,),
        "ln1_gain": (hidden,), "ln1_bias": (hidden,),
        "w2": (hidden, hidden), "b2": (hidden,),
        "ln2_gain": (hidden,), "ln2_bias": (hidden,),
        "w3": (OUT_DIM, hidden), "b3": (OUT_DIM,),
    }
    arrays = {}
    end = len(raw) - 4
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        if pos + 4 * count > end:
            raise FormatError(f"truncated tensor {name}", offset=pos)
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count,
                                     offset=pos).reshape(shape).copy()
        pos += 4 * count
    if pos != end:
        raise FormatError("trailing bytes after tensors", offset=pos)
    return ProjectionParams(dropout_rate=dropout, **arrays)
