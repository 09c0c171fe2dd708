"""Reduce a stack of encoder hidden states (L, S, d_w) to one embedding.

Five strategies: final layer only, middle layer only, unweighted mean of
the last n layers, mean of all layers, and a fixed user-weighted sum.
Every strategy first pools each selected layer over time (mean across the
S sequence positions), then combines layers.  Accumulation happens in
float64; the emitted embedding is float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigError, ShapeError

KINDS = ("final", "middle", "last_n", "average", "weighted")


@dataclass(frozen=True)
class FusionStrategy:
    kind: str
    n: int | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown fusion kind {self.kind!r}")
        if self.kind == "last_n":
            if self.n is None or self.n < 1:
                raise ConfigError("last_n requires n >= 1")
        elif self.kind == "weighted":
            if self.weights is None:
                raise ConfigError("weighted requires a weight vector")
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1 or w.size < 1:
                raise ConfigError("weights must be a non-empty vector")
            if np.any(w < 0):
                raise ConfigError("weights must be non-negative")
            if abs(float(w.sum()) - 1.0) > 1e-9:
                raise ConfigError(f"weights sum to {w.sum()}, expected 1")
            object.__setattr__(self, "weights", w)

    @classmethod
    def final(cls):
        return cls("final")

    @classmethod
    def middle(cls):
        return cls("middle")

    @classmethod
    def last_n(cls, n: int):
        return cls("last_n", n=n)

    @classmethod
    def average(cls):
        return cls("average")

    @classmethod
    def weighted(cls, weights):
        return cls("weighted", weights=np.asarray(weights, dtype=np.float64))


def _check_stack(stack: np.ndarray) -> np.ndarray:
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise ShapeError(f"layer stack must be (L, S, d_w), got {stack.shape}")
    if min(stack.shape) < 1:
        raise ShapeError(f"layer stack has empty dimension: {stack.shape}")
    return stack


def mean_time(stack: np.ndarray, layer_index: int) -> np.ndarray:
    """Temporal mean of one layer; ``layer_index`` is 1-based in 1..L."""
    stack = _check_stack(stack)
    L = stack.shape[0]
    if not 1 <= layer_index <= L:
        raise BoundsError(f"layer_index {layer_index} outside 1..{L}")
    return stack[layer_index - 1].astype(np.float64).mean(axis=0)


def fuse(stack: np.ndarray, strategy: FusionStrategy) -> np.ndarray:
    """Apply a fusion strategy; returns a float32 vector of length d_w."""
    stack = _check_stack(stack)
    L = stack.shape[0]
    if strategy.kind == "last_n" and strategy.n > L:
        raise ConfigError(f"last_n n={strategy.n} exceeds L={L}")
    if strategy.kind == "weighted" and strategy.weights.size != L:
        raise ConfigError(
            f"weights length {strategy.weights.size} != L={L}")

    pooled = stack.astype(np.float64).mean(axis=1)  # (L, d_w)
    if strategy.kind == "final":
        fused = pooled[L - 1]
    elif strategy.kind == "middle":
        # Middle layer for even L: ceil(L / 2), 1-based.
        fused = pooled[(L + 1) // 2 - 1]
    elif strategy.kind == "last_n":
        fused = pooled[L - strategy.n:].mean(axis=0)
    else:
        if strategy.kind == "average":
            weights = np.full(L, 1.0 / L)
        else:
            weights = strategy.weights
        fused = weights @ pooled
    return fused.astype(np.float32)


def parse_strategy(text: str, weights: np.ndarray | None = None) -> FusionStrategy:
    """Parse the CLI spelling: final | middle | last-n:N | average | weighted."""
    if text == "final":
        return FusionStrategy.final()
    if text == "middle":
        return FusionStrategy.middle()
    if text == "average":
        return FusionStrategy.average()
    if text.startswith("last-n:"):
        try:
            n = int(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad last-n strategy {text!r}") from None
        return FusionStrategy.last_n(n)
    if text == "weighted":
        if weights is None:
            raise ConfigError("weighted strategy requires a weights file")
        return FusionStrategy.weighted(weights)
    raise ConfigError(f"unknown fusion strategy {text!r}")
