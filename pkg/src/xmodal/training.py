"""Contrastive alignment training for the projection head.

Objective: symmetric InfoNCE over temperature-scaled cosine logits plus a
distribution-matching penalty on per-dimension batch means and standard
deviations::

    L = nce(F, C, tau) + lam * (||mu_F - mu_C||^2 + ||sigma_F - sigma_C||^2)

Rows of F and C are L2-normalized inside the InfoNCE term (cosine-scale
temperature); the distribution term sees the raw projected features so it
can match the unnormalized statistics of the visual CLS tokens.  Both
choices are echoed in the training-log header for auditability.

Everything runs in float64; parameters are rounded to float32 between
optimizer steps.  Gradients are fully analytic (through normalization,
both softmax directions, layer norm, GELU, frozen dropout masks, and the
batch statistics) and are validated against central finite differences in
the test suite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import BatchTooSmallError, ConfigError, ShapeError
from .projection import (ProjectionParams, TENSOR_NAMES, backward_batch,
                         draw_dropout_masks, forward_batch, init_projection,
                         params_to_bytes)
from .store import EmbeddingDataset, Split

NORM_EPS = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    tau: float = 0.07
    lam: float = 0.02
    lr: float = 5e-5
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    plateau_factor: float = 0.1
    plateau_patience: int = 2
    min_lr: float = 1e-7
    val_fraction: float = 0.1
    min_improvement: float = 1e-6
    dropout_rate: float = 0.1
    hidden: int = 1024

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")


def _check_pair(F: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.asarray(F, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if F.ndim != 2 or C.ndim != 2 or F.shape != C.shape:
        raise ShapeError(f"paired batches must match, got {F.shape} vs {C.shape}")
    if F.shape[0] < 1:
        raise ShapeError("batch must contain at least one row")
    return F, C


def _normalize_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    clamped = np.maximum(norms, NORM_EPS)
    return X / clamped, clamped


def info_nce(F: np.ndarray, C: np.ndarray, tau: float) -> float:
    """Symmetric InfoNCE, averaged over both directions and the batch.

    Rows are L2-normalized before the dot products.  Exactly 0 for B = 1
    and exactly log B when all pairwise logits coincide.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    F, C = _check_pair(F, C)
    B = F.shape[0]
    F_hat, _ = _normalize_rows(F)
    C_hat, _ = _normalize_rows(C)
    logits = (F_hat @ C_hat.T) / tau
    diag = np.diagonal(logits)
    lse_rows = logsumexp(logits, axis=1)
    lse_cols = logsumexp(logits, axis=0)
    return float((lse_rows.sum() + lse_cols.sum() - 2.0 * diag.sum()) / (2.0 * B))


def batch_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension batch mean and population standard deviation."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise BatchTooSmallError(
            f"batch statistics need >= 2 rows, got shape {X.shape}")
    mu = X.mean(axis=0)
    sigma = np.sqrt(((X - mu) ** 2).mean(axis=0))
    return mu, sigma


def dist_match(F: np.ndarray, C: np.ndarray, lam: float) -> float:
    """lam * (||mu_F - mu_C||^2 + ||sigma_F - sigma_C||^2), population sigma."""
    F, C = _check_pair(F, C)
    mu_f, sig_f = batch_stats(F)
    mu_c, sig_c = batch_stats(C)
    return float(lam * (((mu_f - mu_c) ** 2).sum()
                        + ((sig_f - sig_c) ** 2).sum()))


def total_loss(F: np.ndarray, C: np.ndarray, cfg: TrainingConfig) -> float:
    """InfoNCE plus distribution matching; the lam = 0 term is skipped so a
    single-row batch stays well defined."""
    loss = info_nce(F, C, cfg.tau)
    if cfg.lam > 0.0:
        loss += dist_match(F, C, cfg.lam)
    return loss


def _loss_grad_wrt_features(F: np.ndarray, C: np.ndarray,
                            cfg: TrainingConfig) -> tuple[float, np.ndarray]:
    """Loss value and dLoss/dF for raw (pre-normalization) features."""
    F, C = _check_pair(F, C)
    B = F.shape[0]
    F_hat, f_norms = _normalize_rows(F)
    C_hat, _ = _normalize_rows(C)
    logits = (F_hat @ C_hat.T) / cfg.tau
    diag = np.diagonal(logits)
    lse_rows = logsumexp(logits, axis=1)
    lse_cols = logsumexp(logits, axis=0)
    loss = float((lse_rows.sum() + lse_cols.sum() - 2.0 * diag.sum())
                 / (2.0 * B))

    d_logits = (softmax(logits, axis=1) + softmax(logits, axis=0)
                - 2.0 * np.eye(B)) / (2.0 * B)
    dF_hat = (d_logits @ C_hat) / cfg.tau
    # Through row normalization f_hat = f / max(||f||, eps).
    unclamped = np.linalg.norm(F, axis=1, keepdims=True) > NORM_EPS
    radial = (F_hat * dF_hat).sum(axis=1, keepdims=True)
    dF = np.where(unclamped, (dF_hat - radial * F_hat) / f_norms,
                  dF_hat / f_norms)

    if cfg.lam > 0.0:
        mu_f, sig_f = batch_stats(F)
        mu_c, sig_c = batch_stats(C)
        loss += float(cfg.lam * (((mu_f - mu_c) ** 2).sum()
                                 + ((sig_f - sig_c) ** 2).sum()))
        d_mu = 2.0 * cfg.lam * (mu_f - mu_c) / B
        with np.errstate(invalid="ignore", divide="ignore"):
            sigma_dir = np.where(sig_f > 0.0, (F - mu_f) / (B * sig_f), 0.0)
        dF = dF + d_mu + 2.0 * cfg.lam * (sig_f - sig_c) * sigma_dir
    return loss, dF


def batch_loss(tensors: dict, Z: np.ndarray, C: np.ndarray,
               cfg: TrainingConfig, masks: tuple | None) -> float:
    """Pure float64 loss for fixed dropout masks; the finite-difference
    oracle perturbs ``tensors`` and calls this."""
    F, _ = forward_batch(tensors, np.asarray(Z, dtype=np.float64), masks)
    return total_loss(F, C, cfg)


def batch_gradients(tensors: dict, Z: np.ndarray, C: np.ndarray,
                    cfg: TrainingConfig, masks: tuple | None):
    """Analytic (loss, gradients) for fixed dropout masks."""
    Z = np.asarray(Z, dtype=np.float64)
    F, cache = forward_batch(tensors, Z, masks)
    loss, dF = _loss_grad_wrt_features(F, C, cfg)
    return loss, backward_batch(tensors, cache, dF)


def loss_gradients(params: ProjectionParams, Z: np.ndarray, C: np.ndarray,
                   cfg: TrainingConfig, rng=None) -> dict:
    """Gradients of the training objective w.r.t. every parameter tensor.

    Dropout masks are drawn once from ``rng`` and frozen, so the
    differentiated function is deterministic.
    """
    cfg.validate()
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[1] != params.d_a:
        raise ShapeError(f"expected (B, {params.d_a}) audio batch, got {Z.shape}")
    masks = None
    if params.dropout_rate > 0.0:
        masks = draw_dropout_masks(params.hidden, Z.shape[0],
                                   params.dropout_rate, rng)
    _, grads = batch_gradients(params.as_float64(), Z, C, cfg, masks)
    return grads


# ---------------------------------------------------------------------------
# Adam with bias correction


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ProjectionParams) -> "AdamState":
        zeros = {name: np.zeros_like(getattr(params, name), dtype=np.float64)
                 for name in TENSOR_NAMES}
        return cls(m=zeros,
                   v={k: z.copy() for k, z in zeros.items()})


def adam_step(params: ProjectionParams, grads: dict, state: AdamState,
              lr: float) -> ProjectionParams:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    new_tensors = {}
    for name in TENSOR_NAMES:
        g = np.asarray(grads[name], dtype=np.float64)
        theta = getattr(params, name)
        if g.shape != theta.shape:
            raise ShapeError(f"gradient {name} shape {g.shape} != {theta.shape}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        step = lr * (state.m[name] / bc1) / (np.sqrt(state.v[name] / bc2)
                                             + state.eps)
        new_tensors[name] = (theta.astype(np.float64) - step).astype(np.float32)
    return ProjectionParams(dropout_rate=params.dropout_rate, **new_tensors)


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingLog:
    config: TrainingConfig
    n_train: int
    n_val: int
    initial_val_loss: float
    epochs: list = field(default_factory=list)
    final_checksum: str = ""
    # Recorded normalization choices, for auditability.
    feature_normalization: str = "l2-inside-infonce; dist-match-on-raw-features"

    def to_json_lines(self) -> str:
        header = {
            "kind": "header",
            "config": {k: getattr(self.config, k)
                       for k in ("tau", "lam", "lr", "epochs", "batch_size",
                                 "seed", "plateau_factor", "plateau_patience",
                                 "min_lr", "val_fraction", "min_improvement",
                                 "dropout_rate", "hidden")},
            "n_train": self.n_train,
            "n_val": self.n_val,
            "initial_val_loss": self.initial_val_loss,
            "feature_normalization": self.feature_normalization,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for e in self.epochs:
            lines.append(json.dumps({
                "kind": "epoch", "epoch": e.epoch,
                "train_loss": e.train_loss, "val_loss": e.val_loss,
                "lr": e.lr}, sort_keys=True))
        lines.append(json.dumps({"kind": "final",
                                 "param_checksum": self.final_checksum},
                                sort_keys=True))
        return "\n".join(lines) + "\n"


def params_checksum(params: ProjectionParams) -> str:
    return hashlib.sha256(params_to_bytes(params)).hexdigest()


def _paired_arrays(ds: EmbeddingDataset, split: Split):
    if not (ds.dims.has_audio and ds.dims.has_visual):
        raise ConfigError("training needs datasets with audio and visual data")
    segs = ds.subset(split)
    Z = np.stack([s.audio for s in segs]).astype(np.float64) if segs else \
        np.empty((0, ds.dims.d_a))
    C = np.stack([s.visual[0] for s in segs]).astype(np.float64) if segs else \
        np.empty((0, 1024))
    return Z, C


def train_projection(ds: EmbeddingDataset, cfg: TrainingConfig):
    """Train the projection head; returns (params, TrainingLog).

    The dataset's train-split segments are shuffled once with a
    seed-derived permutation and split val_fraction/rest into a held-out
    validation set and the optimization set.  After every epoch the
    validation loss (full batch, no dropout) drives a reduce-on-plateau
    schedule: no improvement >= min_improvement for plateau_patience
    consecutive epochs multiplies the learning rate by plateau_factor,
    bounded below by min_lr.  Bit-deterministic for a given (cfg, ds).
    """
    cfg.validate()
    Z_all, C_all = _paired_arrays(ds, Split.TRAIN)
    n = Z_all.shape[0]
    if n < 2:
        raise ConfigError(f"need at least 2 train segments, got {n}")

    perm = np.random.default_rng([cfg.seed, 1]).permutation(n)
    n_val = max(1, int(round(n * cfg.val_fraction)))
    if n - n_val < 2:
        raise ConfigError("train split empty after validation carve-out")
    if cfg.lam > 0.0 and n_val < 2:
        raise ConfigError(
            "validation split of 1 segment cannot evaluate the "
            "distribution-matching term; enlarge the dataset or val_fraction")
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    Z_tr, C_tr = Z_all[train_idx], C_all[train_idx]
    Z_val, C_val = Z_all[val_idx], C_all[val_idx]
    n_train = Z_tr.shape[0]

    params = init_projection(ds.dims.d_a, seed=cfg.seed, hidden=cfg.hidden,
                             dropout_rate=cfg.dropout_rate)
    state = AdamState.for_params(params)
    dropout_rng = np.random.default_rng([cfg.seed, 3])

    def val_loss_of(p: ProjectionParams) -> float:
        F, _ = forward_batch(p.as_float64(), Z_val, None)
        return total_loss(F, C_val, cfg)

    log = TrainingLog(config=cfg, n_train=n_train, n_val=n_val,
                      initial_val_loss=val_loss_of(params))

    lr = cfg.lr
    best_val = log.initial_val_loss
    stale_epochs = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 2, epoch]).permutation(n_train)
        loss_sum = 0.0
        rows_seen = 0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if batch.size < 2:
                continue  # batch statistics and InfoNCE need >= 2 rows
            masks = None
            if params.dropout_rate > 0.0:
                masks = draw_dropout_masks(params.hidden, batch.size,
                                           params.dropout_rate, dropout_rng)
            loss, grads = batch_gradients(params.as_float64(), Z_tr[batch],
                                          C_tr[batch], cfg, masks)
            params = adam_step(params, grads, state, lr)
            loss_sum += loss * batch.size
            rows_seen += batch.size
        train_loss = loss_sum / rows_seen if rows_seen else float("nan")
        val_loss = val_loss_of(params)
        log.epochs.append(EpochStats(epoch=epoch, train_loss=train_loss,
                                     val_loss=val_loss, lr=lr))
        if val_loss < best_val - cfg.min_improvement:
            best_val = val_loss
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                stale_epochs = 0

    log.final_checksum = params_checksum(params)
    return params, log
