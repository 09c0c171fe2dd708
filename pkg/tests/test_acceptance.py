"""Acceptance suite: every exit criterion at its stated tolerance.

Each test carries an ``acceptance`` marker; the conftest hook prints one
PASS/FAIL line per criterion in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

import gradcheck
from test_fusion import all_strategies, triple_loop_fuse
from test_substitution import oracle_select, random_grid
from xmodal.analysis import (InterpolationConfig, eval_embeddings,
                             interpolation_sweep, pearson)
from xmodal.cli import run
from xmodal.errors import FormatError
from xmodal.fusion import FusionStrategy, fuse
from xmodal.projection import init_projection, draw_dropout_masks
from xmodal.retrieval import RetrievalProtocol, evaluate_retrieval
from xmodal.store import (SynthConfig, datasets_equal, generate_synthetic,
                          load_dataset, save_dataset)
from xmodal.substitution import substitute
from xmodal.training import TrainingConfig, info_nce, train_projection

from test_store import make_dataset


@pytest.mark.acceptance("gradients match central finite differences "
                        "(h=1e-4, rel < 1e-4, 10 configs, < 1 min)")
def test_gradient_correctness():
    """Full per-coordinate coverage over configs spanning
    d_a in {8, 512}, B in {2, 8}, lam in {0, 0.02}."""
    started = time.monotonic()
    rng = np.random.default_rng(1234)
    corners = [(d_a, B, lam)
               for d_a in (8, 512) for B in (2, 8) for lam in (0.0, 0.02)]
    extras = [(int(rng.integers(8, 513)), int(rng.integers(2, 9)),
               float(rng.choice([0.0, 0.02]))) for _ in range(2)]
    worst_overall = 0.0
    for trial, (d_a, B, lam) in enumerate(corners + extras):
        hidden = int(rng.integers(4, 7))
        rate = 0.1 if trial % 2 else 0.0
        params = init_projection(d_a, seed=trial, hidden=hidden,
                                 dropout_rate=rate)
        tensors = params.as_float64()
        Z = rng.normal(size=(B, d_a))
        C = rng.normal(size=(B, 1024))
        masks = None
        if rate > 0.0:
            masks = draw_dropout_masks(hidden, B, rate,
                                       np.random.default_rng(trial))
        worst, _ = gradcheck.check_gradients(tensors, Z, C,
                                             TrainingConfig(lam=lam), masks)
        worst_overall = max(worst_overall, worst)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s"


@pytest.mark.acceptance("InfoNCE closed forms (log B within 1e-9; B=1 -> 0; "
                        "orthonormal pairs < 1e-6)")
def test_info_nce_closed_forms():
    rng = np.random.default_rng(0)
    # Uniform logits: every row/column softmax is uniform.
    F = np.tile(rng.normal(size=32), (4, 1))
    C = np.tile(rng.normal(size=32), (4, 1))
    loss = info_nce(F, C, 0.07)
    assert abs(loss - math.log(4)) < 1e-9
    assert round(loss, 7) == 1.3862944

    assert info_nce(rng.normal(size=(1, 16)),
                    rng.normal(size=(1, 16)), 0.07) == 0.0

    F = np.eye(2, 128)
    loss = info_nce(F, F, 0.07)
    assert loss < 1e-6
    assert abs(loss - math.log(1.0 + math.exp(-1.0 / 0.07))) < 1e-12


@pytest.mark.acceptance("random baseline: untrained projection on "
                        "uncorrelated data -> mean rank in [47.5, 53.5]")
def test_random_baseline():
    # n = 5000 fills the protocol's full 500-segment test pool; smaller
    # pools leave dataset-level geometry noise of a few rank points.
    ds = generate_synthetic(SynthConfig(n_segments=5000, d_a=256, N=0,
                                        noise_level=1.0, seed=71))
    params = init_projection(256, seed=72)
    A, C = eval_embeddings(ds, params)
    report = evaluate_retrieval(A, C, RetrievalProtocol(pool_size=100,
                                                        repeats=5, seed=73))
    for name in ("a2v", "v2a"):
        mean_rank = report.directions[name].mean_rank
        assert 47.5 <= mean_rank <= 53.5, f"{name} mean rank {mean_rank}"
    # Fully noisy audio is chance-level against the CLS side even without
    # any projection (zero-pad path), per the same (P + 1) / 2 expectation.
    A_raw, _ = eval_embeddings(ds, None)
    raw_report = evaluate_retrieval(A_raw, C, RetrievalProtocol(
        pool_size=100, repeats=5, seed=74))
    for name in ("a2v", "v2a"):
        mean_rank = raw_report.directions[name].mean_rank
        assert 47.5 <= mean_rank <= 53.5, f"raw {name} mean rank {mean_rank}"


@pytest.mark.acceptance("alignment gain: trained projection reaches "
                        "A->V mean rank <= 10 and Top-1 >= 30% (< 5 min)")
def test_alignment_gain():
    started = time.monotonic()
    ds = generate_synthetic(SynthConfig(n_segments=5000, d_a=256, N=0,
                                        noise_level=0.2, seed=11))
    params, log = train_projection(ds, TrainingConfig())
    assert log.epochs[-1].val_loss < log.initial_val_loss
    A, C = eval_embeddings(ds, params)
    report = evaluate_retrieval(A, C, RetrievalProtocol(pool_size=100,
                                                        repeats=5, seed=12))
    stats = report.directions["a2v"]
    assert stats.mean_rank <= 10.0, f"mean rank {stats.mean_rank}"
    assert stats.top1 >= 30.0, f"top1 {stats.top1}"
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"training run took {elapsed:.1f}s"


@pytest.mark.acceptance("substitution selection equals brute-force "
                        "full-sort oracle on 1000 cases incl. ties")
def test_substitution_oracle():
    rng = np.random.default_rng(99)
    for trial in range(1000):
        n = int(rng.integers(1, 28))
        grid = random_grid(rng, n, ties=trial % 3 == 0)
        f_a = rng.normal(size=1024).astype(np.float32)
        k = int(rng.integers(0, n + 2))
        result = substitute(f_a, grid, k)
        expected, _ = oracle_select(f_a, grid, k)
        assert list(result.selected_indices) == expected


@pytest.mark.acceptance("fusion matches triple-loop oracle within 1e-6; "
                        "last_n(1) identical to final-only")
def test_fusion_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        L = int(rng.integers(1, 9))
        S = int(rng.integers(1, 17))
        d_w = int(rng.integers(1, 33))
        stack = rng.normal(size=(L, S, d_w)).astype(np.float32)
        for strategy in all_strategies(L, rng):
            np.testing.assert_allclose(fuse(stack, strategy),
                                       triple_loop_fuse(stack, strategy),
                                       atol=1e-6)
        np.testing.assert_array_equal(fuse(stack, FusionStrategy.last_n(1)),
                                      fuse(stack, FusionStrategy.final()))


@pytest.mark.acceptance("interpolation sweep endpoints byte-identical to "
                        "standalone projected / raw-pad reports")
def test_interpolation_endpoints():
    ds = generate_synthetic(SynthConfig(n_segments=1000, d_a=64, N=0,
                                        noise_level=0.3, seed=41))
    params = init_projection(64, seed=42, hidden=64)
    proto = RetrievalProtocol(pool_size=100, repeats=5, seed=43)
    rows = interpolation_sweep(ds, params,
                               InterpolationConfig(alphas=(0.0, 0.5, 1.0),
                                                   protocol=proto))
    A_proj, C = eval_embeddings(ds, params)
    A_raw, _ = eval_embeddings(ds, None)
    projected = evaluate_retrieval(A_proj, C, proto).canonical_json()
    raw = evaluate_retrieval(A_raw, C, proto).canonical_json()
    assert rows[0].report.canonical_json().encode() == projected.encode()
    assert rows[2].report.canonical_json().encode() == raw.encode()


@pytest.mark.acceptance("full pipeline run twice with one seed is "
                        "byte-identical (params, logs, reports)")
def test_pipeline_determinism(tmp_path):
    def pipeline(tag):
        base = tmp_path / tag
        base.mkdir()
        data = base / "data.aveb"
        params = base / "params.avep"
        log = base / "train.jsonl"
        report = base / "eval.jsonl"
        sweep = base / "sweep.jsonl"
        assert run(["gen-synthetic", "--n", "300", "--d-a", "24",
                    "--patches", "0", "--noise", "0.2", "--seed", "17",
                    "--out", str(data)]) == 0
        assert run(["train", "--data", str(data), "--out-params", str(params),
                    "--epochs", "2", "--batch-size", "32", "--seed", "17",
                    "--log", str(log)]) == 0
        assert run(["eval", "--data", str(data), "--params", str(params),
                    "--pool", "20", "--repeats", "3", "--seed", "17",
                    "--out", str(report)]) == 0
        assert run(["interpolate", "--data", str(data), "--params",
                    str(params), "--alphas", "0,0.5,1", "--pool", "20",
                    "--repeats", "3", "--seed", "17",
                    "--out", str(sweep)]) == 0
        return {p.name: p.read_bytes()
                for p in (data, params, log, report, sweep)}

    first = pipeline("first")
    second = pipeline("second")
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"


@pytest.mark.acceptance("pearson fixtures: r = +-1 within 1e-12; "
                        "(1,2,3)/(1,3,2) -> 0.5 within 1e-12")
def test_pearson_fixtures():
    xs = np.arange(12.0)
    assert abs(pearson(xs, 2.0 * xs + 3.0) - 1.0) < 1e-12
    assert abs(pearson(xs, -xs) + 1.0) < 1e-12
    assert abs(pearson([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]) - 0.5) < 1e-12


@pytest.mark.acceptance("container format: random round-trips equal; "
                        "corrupt-byte fuzzing always a clean format error")
def test_format_roundtrip_and_fuzzing(tmp_path):
    rng = np.random.default_rng(5)
    for trial in range(10):
        ds = make_dataset(seed=trial, n=int(rng.integers(1, 8)),
                          d_a=int(rng.integers(1, 12)),
                          with_layers=bool(trial % 2),
                          with_visual=bool((trial // 2) % 2) or trial % 2 == 0,
                          n_patches=int(rng.integers(0, 4)))
        path = tmp_path / f"rt{trial}.aveb"
        save_dataset(ds, path)
        assert datasets_equal(ds, load_dataset(path))

    ds = make_dataset(seed=50, n=4, with_layers=True)
    path = tmp_path / "fuzz.aveb"
    save_dataset(ds, path)
    original = path.read_bytes()
    for trial in range(100):
        corrupted = bytearray(original)
        pos = int(rng.integers(0, len(original)))
        corrupted[pos] ^= 1 << int(rng.integers(0, 8))
        path.write_bytes(bytes(corrupted))
        with pytest.raises(FormatError):
            load_dataset(path)
    for cut in (3, 7, 21, len(original) - 5):
        path.write_bytes(original[:cut])
        with pytest.raises(FormatError):
            load_dataset(path)
    # CLI surface: corruption exits 2, never crashes.
    corrupted = bytearray(original)
    corrupted[len(original) // 2] ^= 0x40
    path.write_bytes(bytes(corrupted))
    assert run(["inspect", "--path", str(path)]) == 2
