"""Bidirectional retrieval protocol: sampled pools, rank of the true
match under normalized cosine similarity, mean rank and Top-k accuracy.

Protocol: per repeat, sample ``pool_size`` paired items (seed-derived,
without replacement) from the first ``min(max_pool, available)`` eligible
pairs, rank every query against the sampled pool in both directions, and
aggregate across repeats.  Ranks treat ties pessimistically: a candidate
tied with the true match counts as ahead of it.  Top-k accuracy is
computed on the same sampled pools as mean rank.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError, ShapeError

DIRECTIONS = ("a2v", "v2a")


@dataclass(frozen=True)
class RetrievalProtocol:
    pool_size: int = 100
    max_pool: int = 500
    repeats: int = 5
    seed: int = 0
    direction: str = "both"  # a2v | v2a | both

    def validate(self) -> None:
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if self.max_pool < self.pool_size:
            raise ConfigError("max_pool must be >= pool_size")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.direction not in ("a2v", "v2a", "both"):
            raise ConfigError(f"unknown direction {self.direction!r}")

    def wanted(self) -> tuple[str, ...]:
        return DIRECTIONS if self.direction == "both" else (self.direction,)


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0.0)


def similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """M[i, j] = cosine similarity of A row i and B row j (zero-norm -> 0)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ShapeError(f"incompatible shapes {A.shape} and {B.shape}")
    return _normalize_rows(A) @ _normalize_rows(B).T


def rank_of_match(scores: np.ndarray, true_index: int) -> int:
    """1-based rank of the true candidate; ties count against the query."""
    scores = np.asarray(scores)
    if scores.ndim != 1:
        raise ShapeError(f"scores must be a vector, got {scores.shape}")
    if not 0 <= true_index < scores.shape[0]:
        raise BoundsError(f"true_index {true_index} outside 0..{scores.shape[0] - 1}")
    # Counts the true candidate itself once, so this is 1 + |{j != t : s_j >= s_t}|.
    return int(np.count_nonzero(scores >= scores[true_index]))


@dataclass(frozen=True)
class DirectionStats:
    mean_rank: float
    rank_std_across_repeats: float
    top1: float   # percent
    top3: float
    top10: float
    per_repeat_mean_ranks: tuple[float, ...]
    per_repeat_ranks: tuple[tuple[int, ...], ...]


@dataclass
class RetrievalReport:
    pool_size: int
    max_pool: int
    repeats: int
    seed: int
    pool_available: int
    directions: dict = field(default_factory=dict)  # name -> DirectionStats
    warnings: tuple[str, ...] = ()
    notes: str = "top-k computed on the same sampled pools as mean rank"

    def to_dict(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "max_pool": self.max_pool,
            "repeats": self.repeats,
            "seed": self.seed,
            "pool_available": self.pool_available,
            "warnings": list(self.warnings),
            "notes": self.notes,
            "directions": {
                name: {
                    "mean_rank": stats.mean_rank,
                    "rank_std_across_repeats": stats.rank_std_across_repeats,
                    "top1": stats.top1, "top3": stats.top3, "top10": stats.top10,
                    "per_repeat_mean_ranks": list(stats.per_repeat_mean_ranks),
                    "per_repeat_ranks": [list(r) for r in stats.per_repeat_ranks],
                }
                for name, stats in sorted(self.directions.items())
            },
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))

    def to_json_lines(self) -> str:
        base = self.to_dict()
        directions = base.pop("directions")
        lines = [json.dumps({"kind": "protocol", **base}, sort_keys=True)]
        for name, stats in directions.items():
            lines.append(json.dumps({"kind": "direction", "direction": name,
                                     **stats}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = ["direction  mean_rank  rank_std     T1     T3    T10"]
        for name, s in sorted(self.directions.items()):
            rows.append(f"{name:>9}  {s.mean_rank:9.2f}  {s.rank_std_across_repeats:8.3f}"
                        f"  {s.top1:5.1f}  {s.top3:5.1f}  {s.top10:5.1f}")
        return "\n".join(rows)


def evaluate_retrieval(audio_side: np.ndarray, visual_side: np.ndarray,
                       protocol: RetrievalProtocol) -> RetrievalReport:
    """Run the sampled bidirectional protocol over paired embedding rows.

    ``audio_side`` and ``visual_side`` are (n, d) arrays whose rows are
    paired.  Deterministic for a given protocol seed.
    """
    protocol.validate()
    A = np.asarray(audio_side, dtype=np.float64)
    V = np.asarray(visual_side, dtype=np.float64)
    if A.ndim != 2 or V.ndim != 2 or A.shape != V.shape:
        raise ShapeError(f"paired sides must match, got {A.shape} vs {V.shape}")
    n = A.shape[0]
    if n < 1:
        raise ConfigError("no pairs available for evaluation")

    pool_available = min(protocol.max_pool, n)
    pool_size = min(protocol.pool_size, pool_available)
    warnings = ()
    if pool_size < protocol.pool_size:
        warnings = (f"pool clipped to {pool_size} of requested "
                    f"{protocol.pool_size} (only {pool_available} pairs)",)

    wanted = protocol.wanted()
    ranks: dict[str, list[tuple[int, ...]]] = {d: [] for d in wanted}
    for repeat in range(protocol.repeats):
        rng = np.random.default_rng([protocol.seed, repeat])
        idx = rng.choice(pool_available, size=pool_size, replace=False)
        sims = similarity_matrix(A[idx], V[idx])
        if "a2v" in ranks:
            ranks["a2v"].append(tuple(
                rank_of_match(sims[i], i) for i in range(pool_size)))
        if "v2a" in ranks:
            ranks["v2a"].append(tuple(
                rank_of_match(sims[:, i], i) for i in range(pool_size)))

    report = RetrievalReport(pool_size=pool_size, max_pool=protocol.max_pool,
                             repeats=protocol.repeats, seed=protocol.seed,
                             pool_available=pool_available, warnings=warnings)
    for name in wanted:
        per_repeat = ranks[name]
        repeat_means = tuple(float(np.mean(r)) for r in per_repeat)
        flat = np.concatenate([np.asarray(r) for r in per_repeat])
        report.directions[name] = DirectionStats(
            mean_rank=float(np.mean(repeat_means)),
            rank_std_across_repeats=float(np.std(repeat_means)),
            top1=float(np.mean(flat <= 1) * 100.0),
            top3=float(np.mean(flat <= 3) * 100.0),
            top10=float(np.mean(flat <= 10) * 100.0),
            per_repeat_mean_ranks=repeat_means,
            per_repeat_ranks=tuple(per_repeat),
        )
    return report
