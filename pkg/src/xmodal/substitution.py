"""Token-grid substitution: CLS replacement plus similarity-guided
patch retention.

Given a mapped audio vector f_a and a visual token grid V ((N+1) x 1024,
row 0 = CLS), row 0 is replaced by f_a, cosine similarity s_i between f_a
and every patch row v_i (i = 1..N) is computed, and only the k highest-
scoring patch rows are kept; the rest are zeroed.  Ties break toward the
lower patch index.  Patch indices are 1-based so index i names grid row i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .store import TOKEN_DIM


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 by definition when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"vectors must have equal length, got {a.shape} vs {b.shape}")
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return 0.0
    return float(a @ b / norm)


@dataclass(frozen=True)
class SubstitutionResult:
    grid: np.ndarray               # (N + 1, 1024), row 0 = f_a
    selected_indices: tuple[int, ...]  # 1-based patch/row indices, ascending
    similarities: np.ndarray       # (N,), similarities[i - 1] is s_i


def substitute(f_a: np.ndarray, grid: np.ndarray, k: int) -> SubstitutionResult:
    """Apply the substitution; the input grid is never mutated.

    k larger than N is clamped to N; k = 0 keeps only the audio row.
    """
    f_a = np.asarray(f_a)
    grid = np.asarray(grid)
    if f_a.ndim != 1 or f_a.shape[0] != TOKEN_DIM:
        raise ShapeError(f"f_a must have length {TOKEN_DIM}, got {f_a.shape}")
    if grid.ndim != 2 or grid.shape[1] != TOKEN_DIM or grid.shape[0] < 1:
        raise ShapeError(f"grid must be (N + 1, {TOKEN_DIM}), got {grid.shape}")
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    n_patches = grid.shape[0] - 1
    k = min(k, n_patches)

    patches = grid[1:].astype(np.float64)
    f64 = f_a.astype(np.float64)
    dots = patches @ f64
    norms = np.linalg.norm(patches, axis=1) * np.linalg.norm(f64)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(norms > 0.0, dots / norms, 0.0)

    # Stable sort on descending similarity keeps lower indices first on ties.
    order = np.argsort(-sims, kind="stable")
    selected = tuple(sorted(int(i) + 1 for i in order[:k]))

    out = np.zeros_like(grid)
    out[0] = f_a.astype(grid.dtype)
    for row in selected:
        out[row] = grid[row]
    return SubstitutionResult(grid=out, selected_indices=selected,
                              similarities=sims)
