"""Interpolation sweep, Pearson correlation, and the retrieval/generation
trade-off table.

Generation quality scores are never computed here; they arrive as an
external CSV (header ``encoder,aligned,overall_score``) and are joined
with internally produced retrieval numbers per encoder label.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, MissingLabelError, ShapeError,
                     UndefinedCorrelationError)
from .projection import ProjectionParams, pad_or_truncate, project_batch
from .retrieval import RetrievalProtocol, RetrievalReport, evaluate_retrieval
from .store import EmbeddingDataset, Split

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class InterpolationConfig:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    protocol: RetrievalProtocol = field(default_factory=RetrievalProtocol)

    def validate(self) -> None:
        for alpha in self.alphas:
            if not 0.0 <= alpha <= 1.0:
                raise ConfigError(f"alpha {alpha} outside [0, 1]")
        self.protocol.validate()


def interpolate(z_raw: np.ndarray, z_aligned: np.ndarray,
                alpha: float) -> np.ndarray:
    """Convex combination alpha * raw + (1 - alpha) * aligned."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha {alpha} outside [0, 1]")
    z_raw = np.asarray(z_raw)
    z_aligned = np.asarray(z_aligned)
    if z_raw.shape != z_aligned.shape:
        raise ShapeError(f"operand shapes differ: {z_raw.shape} vs {z_aligned.shape}")
    dtype = np.result_type(z_raw, z_aligned)
    return (dtype.type(alpha) * z_raw
            + dtype.type(1.0 - alpha) * z_aligned)


def eval_embeddings(ds: EmbeddingDataset, params: ProjectionParams | None,
                    split: Split = Split.TEST):
    """(audio side, CLS side) arrays for the given split; the audio side is
    projected when params are given, zero-padded/truncated otherwise."""
    if not (ds.dims.has_audio and ds.dims.has_visual):
        raise ConfigError("evaluation needs datasets with audio and visual data")
    segs = ds.subset(split)
    if not segs:
        raise ConfigError(f"dataset has no {split.name.lower()} segments")
    Z = np.stack([s.audio for s in segs])
    C = np.stack([s.visual[0] for s in segs])
    if params is not None:
        A = project_batch(params, Z, mode="infer")
    else:
        A = np.stack([pad_or_truncate(z) for z in Z])
    return A, C


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    report: RetrievalReport

    def summary(self) -> dict:
        out = {"alpha": self.alpha}
        for name, stats in sorted(self.report.directions.items()):
            out[name] = {"mean_rank": stats.mean_rank, "top1": stats.top1}
        return out


def interpolation_sweep(ds: EmbeddingDataset, params: ProjectionParams,
                        cfg: InterpolationConfig) -> list[SweepRow]:
    """Retrieval quality along the raw-to-aligned interpolation path.

    alpha = 0 reproduces the projected evaluation exactly; alpha = 1 the
    zero-pad baseline (byte-identical reports under shared seeds).
    """
    cfg.validate()
    aligned, cls_side = eval_embeddings(ds, params)
    raw, _ = eval_embeddings(ds, None)
    rows = []
    for alpha in cfg.alphas:
        mixed = interpolate(raw, aligned, alpha)
        rows.append(SweepRow(alpha=alpha,
                             report=evaluate_retrieval(mixed, cls_side,
                                                       cfg.protocol)))
    return rows


def sweep_json_lines(rows: list[SweepRow]) -> str:
    lines = [json.dumps({"kind": "sweep_row", "alpha": row.alpha,
                         "report": row.report.to_dict()}, sort_keys=True)
             for row in rows]
    return "\n".join(lines) + "\n"


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"inputs must be equal-length vectors, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ConfigError("correlation needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance in correlation input")
    return float((dx * dy).sum() / np.sqrt(sxx * syy))


# ---------------------------------------------------------------------------
# Trade-off table


@dataclass(frozen=True)
class TradeoffRow:
    encoder: str
    retrieval_gain_pp: float   # aligned T1 - raw T1, percentage points
    generation_delta: float    # raw score - aligned score
    efficiency: float | None   # generation loss per pp of gain; None if gain 0


@dataclass(frozen=True)
class TradeoffTable:
    rows: tuple[TradeoffRow, ...]
    pearson_r: float
    low_sample: bool  # fewer than 3 encoders: r is +-1 by construction

    def to_json_lines(self) -> str:
        lines = [json.dumps({"kind": "summary", "pearson_r": self.pearson_r,
                             "low_sample": self.low_sample}, sort_keys=True)]
        for row in self.rows:
            lines.append(json.dumps({
                "kind": "encoder", "encoder": row.encoder,
                "retrieval_gain_pp": row.retrieval_gain_pp,
                "generation_delta": row.generation_delta,
                "efficiency": row.efficiency}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        out = ["encoder          gain_pp   gen_delta  loss_per_pp"]
        for row in self.rows:
            eff = f"{row.efficiency:.4f}" if row.efficiency is not None else "n/a"
            out.append(f"{row.encoder:<16} {row.retrieval_gain_pp:7.2f}"
                       f"   {row.generation_delta:9.4f}  {eff:>11}")
        out.append(f"pearson r = {self.pearson_r:.4f}"
                   + ("  (low sample: |r| = 1 by construction)"
                      if self.low_sample else ""))
        return "\n".join(out)


def _index_pairs(rows, value_key):
    """{encoder: {False: raw value, True: aligned value}} from records."""
    table: dict[str, dict[bool, float]] = {}
    for row in rows:
        table.setdefault(row["encoder"], {})[bool(row["aligned"])] = \
            float(row[value_key])
    return table


def tradeoff_report(retrieval_rows, generation_rows) -> TradeoffTable:
    """Join per-encoder retrieval Top-1 and generation scores.

    ``retrieval_rows``: records {encoder, aligned, top1}; ``generation_rows``:
    records {encoder, aligned, overall_score}.  Each encoder needs a raw and
    an aligned row on both sides.
    """
    retr = _index_pairs(retrieval_rows, "top1")
    gen = _index_pairs(generation_rows, "overall_score")
    missing = []
    for encoder in sorted(set(retr) | set(gen)):
        for side, table in (("retrieval", retr), ("generation", gen)):
            have = table.get(encoder, {})
            if True not in have or False not in have:
                missing.append(f"{encoder} ({side})")
    if missing:
        raise MissingLabelError(
            "incomplete raw/aligned pairs for: " + ", ".join(missing),
            labels=missing)
    encoders = sorted(retr)
    if len(encoders) < 2:
        raise ConfigError("trade-off correlation needs at least 2 encoders")

    rows = []
    for encoder in encoders:
        gain = retr[encoder][True] - retr[encoder][False]
        delta = gen[encoder][False] - gen[encoder][True]
        rows.append(TradeoffRow(
            encoder=encoder, retrieval_gain_pp=gain, generation_delta=delta,
            efficiency=(delta / gain) if gain != 0.0 else None))
    gains = [r.retrieval_gain_pp for r in rows]
    deltas = [r.generation_delta for r in rows]
    return TradeoffTable(rows=tuple(rows), pearson_r=pearson(gains, deltas),
                         low_sample=len(rows) < 3)


def read_score_csv(path, value_column: str):
    """Read ``encoder,aligned,<value_column>`` records from a CSV file."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {
                "encoder", "aligned", value_column}.issubset(reader.fieldnames):
            raise ConfigError(
                f"CSV needs columns encoder,aligned,{value_column}; "
                f"got {reader.fieldnames}")
        for record in reader:
            aligned_text = record["aligned"].strip().lower()
            if aligned_text in ("true", "1", "yes"):
                aligned = True
            elif aligned_text in ("false", "0", "no"):
                aligned = False
            else:
                raise ConfigError(f"bad aligned value {record['aligned']!r}")
            try:
                value = float(record[value_column])
            except ValueError:
                raise ConfigError(
                    f"bad {value_column} value {record[value_column]!r}") from None
            rows.append({"encoder": record["encoder"].strip(),
                         "aligned": aligned, value_column: value})
    return rows
