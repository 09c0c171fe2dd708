"""Single entry point exposing every pipeline as a subcommand.

Exit codes: 0 success, 1 validation/configuration error, 2 I/O or file
format error.  Every stochastic choice is fully determined by the
relevant --seed flag.  Outputs are written atomically (temp file plus
rename), so failed runs never leave partial files behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import analysis, fusion, projection, retrieval, store, training
from .errors import ConfigError, FormatError, ValidationError, XmodalError

log = logging.getLogger("xmodal")

BUDGET_PRESETS = {"audio": 15, "vision": 150}


class _UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="xmodal",
                     description="audio-visual embedding alignment toolkit")
    parser.add_argument("--log-level", default=os.environ.get("XMODAL_LOG", "WARNING"),
                        help="logging level (or env XMODAL_LOG)")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker hint; never changes numerical results")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen-synthetic", help="write a synthetic paired dataset")
    p.add_argument("--n", type=int, required=True, help="number of segments")
    p.add_argument("--d-a", type=int, default=512, help="audio embedding dim")
    p.add_argument("--patches", type=int, default=16, help="patch rows per grid")
    p.add_argument("--noise", type=float, default=0.5,
                   help="audio noise level in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter", help="keep segments above an alignment threshold")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fuse", help="reduce layer stacks to audio embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", required=True,
                   help="final | middle | last-n:N | average | weighted:FILE")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the projection head")
    p.add_argument("--data", required=True)
    p.add_argument("--out-params", required=True)
    p.add_argument("--tau", type=float, default=0.07)
    p.add_argument("--lambda", dest="lam", type=float, default=0.02)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plateau-factor", type=float, default=0.1)
    p.add_argument("--plateau-patience", type=int, default=2)
    p.add_argument("--log", dest="log_path", default=None,
                   help="write the JSONL training log here (default stdout)")

    p = sub.add_parser("project", help="map audio embeddings to visual space")
    p.add_argument("--data", required=True)
    p.add_argument("--params", default=None,
                   help="trained parameters; absent uses zero-pad matching")
    p.add_argument("--out", required=True)

    p = sub.add_parser("substitute", help="token-grid substitution")
    p.add_argument("--data", required=True)
    p.add_argument("--params", default=None,
                   help="trained parameters; absent uses zero-pad matching")
    p.add_argument("--k", type=int, default=None, help="patch budget")
    p.add_argument("--budget", choices=sorted(BUDGET_PRESETS),
                   default=None, help="named budget preset (audio=15, vision=150)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="bidirectional retrieval evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--mode", choices=["projected", "raw-pad"], default=None,
                   help="default: projected when --params given, else raw-pad")
    p.add_argument("--pool", type=int, default=100)
    p.add_argument("--max-pool", type=int, default=500)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=["a2v", "v2a", "both"], default="both")
    p.add_argument("--out", default=None, help="write the JSONL report here")

    p = sub.add_parser("interpolate", help="sweep raw-to-aligned interpolation")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1",
                   help="comma-separated alphas in [0, 1]")
    p.add_argument("--pool", type=int, default=100)
    p.add_argument("--max-pool", type=int, default=500)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=["a2v", "v2a", "both"], default="both")
    p.add_argument("--out", default=None)

    p = sub.add_parser("tradeoff", help="retrieval/generation trade-off table")
    p.add_argument("--retrieval", required=True,
                   help="CSV with columns encoder,aligned,top1")
    p.add_argument("--generation", required=True,
                   help="CSV with columns encoder,aligned,overall_score")
    p.add_argument("--out", default=None)

    p = sub.add_parser("inspect", help="summarize a dataset or parameter file")
    p.add_argument("--path", required=True)

    return parser


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        store.atomic_write(path, text.encode("utf-8"))


def _load_params_arg(path: str | None):
    return None if path is None else projection.load_params(path)


def _protocol(args) -> retrieval.RetrievalProtocol:
    proto = retrieval.RetrievalProtocol(
        pool_size=args.pool, max_pool=args.max_pool, repeats=args.repeats,
        seed=args.seed, direction=args.direction)
    proto.validate()
    return proto


# ---------------------------------------------------------------------------
# Subcommand bodies


def _cmd_gen_synthetic(args) -> int:
    cfg = store.SynthConfig(n_segments=args.n, d_a=args.d_a, N=args.patches,
                            noise_level=args.noise, seed=args.seed)
    cfg.validate()
    ds = store.generate_synthetic(cfg)
    store.save_dataset(ds, args.out)
    log.info("wrote %d segments to %s", len(ds), args.out)
    return 0


def _cmd_filter(args) -> int:
    if not 0.0 <= args.threshold <= 10.0:
        raise ConfigError(f"threshold {args.threshold} outside [0, 10]")
    ds = store.load_dataset(args.data)
    kept = store.filter_by_alignment(ds, args.threshold)
    store.save_dataset(kept, args.out)
    print(f"kept {len(kept)} of {len(ds)} segments")
    return 0


def _cmd_fuse(args) -> int:
    strategy_text = args.strategy
    weights = None
    if strategy_text.startswith("weighted:"):
        weights_path = strategy_text.split(":", 1)[1]
        strategy_text = "weighted"
        weights = np.loadtxt(weights_path, dtype=np.float64, ndmin=1)
    strategy = fusion.parse_strategy(strategy_text, weights=weights)

    ds = store.load_dataset(args.data)
    if not ds.dims.has_layers:
        raise ConfigError("dataset has no layer stacks to fuse")
    segments = tuple(
        store.Segment(meta=seg.meta, audio=fusion.fuse(seg.layers, strategy),
                      layers=None, visual=seg.visual)
        for seg in ds.segments)
    dims = store.DatasetDims(d_a=ds.dims.d_w, N=ds.dims.N, has_audio=True,
                             has_visual=ds.dims.has_visual)
    store.save_dataset(store.EmbeddingDataset(dims=dims, segments=segments),
                       args.out)
    return 0


def _cmd_train(args) -> int:
    cfg = training.TrainingConfig(
        tau=args.tau, lam=args.lam, lr=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed,
        plateau_factor=args.plateau_factor,
        plateau_patience=args.plateau_patience)
    cfg.validate()
    ds = store.load_dataset(args.data)
    params, train_log = training.train_projection(ds, cfg)
    projection.save_params(params, args.out_params)
    _write_text(args.log_path, train_log.to_json_lines())
    return 0


def _cmd_project(args) -> int:
    params = _load_params_arg(args.params)
    ds = store.load_dataset(args.data)
    if not ds.dims.has_audio:
        raise ConfigError("dataset has no audio embeddings to project")
    mapped = []
    for seg in ds.segments:
        if params is not None:
            vec = projection.project(params, seg.audio, mode="infer")
        else:
            vec = projection.pad_or_truncate(seg.audio)
        mapped.append(store.Segment(meta=seg.meta, audio=vec, layers=None,
                                    visual=seg.visual))
    dims = store.DatasetDims(d_a=projection.OUT_DIM, N=ds.dims.N,
                             has_audio=True, has_visual=ds.dims.has_visual)
    store.save_dataset(store.EmbeddingDataset(dims=dims, segments=tuple(mapped)),
                       args.out)
    return 0


def _cmd_substitute(args) -> int:
    from .substitution import substitute

    if args.k is None and args.budget is None:
        raise ConfigError("give --k or --budget")
    k = args.k if args.k is not None else BUDGET_PRESETS[args.budget]
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    params = _load_params_arg(args.params)
    ds = store.load_dataset(args.data)
    if not (ds.dims.has_audio and ds.dims.has_visual):
        raise ConfigError("substitution needs audio and visual data")
    out_segments = []
    for seg in ds.segments:
        if params is not None:
            f_a = projection.project(params, seg.audio, mode="infer")
        else:
            f_a = projection.pad_or_truncate(seg.audio)
        result = substitute(f_a, seg.visual, k)
        out_segments.append(store.Segment(meta=seg.meta, audio=None,
                                          layers=None, visual=result.grid))
    dims = store.DatasetDims(N=ds.dims.N, has_visual=True)
    store.save_dataset(store.EmbeddingDataset(dims=dims,
                                              segments=tuple(out_segments)),
                       args.out)
    return 0


def _cmd_eval(args) -> int:
    mode = args.mode or ("projected" if args.params else "raw-pad")
    if mode == "projected" and args.params is None:
        raise ConfigError("--mode projected requires --params")
    params = _load_params_arg(args.params) if mode == "projected" else None
    proto = _protocol(args)
    ds = store.load_dataset(args.data)
    side_a, side_v = analysis.eval_embeddings(ds, params)
    report = retrieval.evaluate_retrieval(side_a, side_v, proto)
    _write_text(args.out, report.to_json_lines())
    print(report.table())
    return 0


def _cmd_interpolate(args) -> int:
    try:
        alphas = tuple(float(a) for a in args.alphas.split(","))
    except ValueError:
        raise ConfigError(f"bad --alphas value {args.alphas!r}") from None
    cfg = analysis.InterpolationConfig(alphas=alphas, protocol=_protocol(args))
    cfg.validate()
    params = projection.load_params(args.params)
    ds = store.load_dataset(args.data)
    rows = analysis.interpolation_sweep(ds, params, cfg)
    _write_text(args.out, analysis.sweep_json_lines(rows))
    for row in rows:
        print(json.dumps(row.summary(), sort_keys=True))
    return 0


def _cmd_tradeoff(args) -> int:
    retrieval_rows = analysis.read_score_csv(args.retrieval, "top1")
    generation_rows = analysis.read_score_csv(args.generation, "overall_score")
    table = analysis.tradeoff_report(retrieval_rows, generation_rows)
    _write_text(args.out, table.to_json_lines())
    print(table.table())
    return 0


def _histogram_line(name: str, values: np.ndarray) -> str:
    counts, _ = np.histogram(values, bins=10, range=(0.0, 10.0))
    cells = " ".join(f"{c:4d}" for c in counts)
    return f"  {name:<12} [{cells}]"


def _cmd_inspect(args) -> int:
    with open(args.path, "rb") as handle:
        magic = handle.read(4)
    if magic == store.MAGIC:
        ds = store.load_dataset(args.path)
        d = ds.dims
        print(f"dataset: {len(ds)} segments")
        print(f"dims: d_a={d.d_a} L={d.L} S={d.S} d_w={d.d_w} N={d.N}")
        print(f"modalities: audio={d.has_audio} layers={d.has_layers} "
              f"visual={d.has_visual}")
        splits = {s.name.lower(): 0 for s in store.Split}
        for seg in ds.segments:
            splits[seg.meta.split.name.lower()] += 1
        print(f"splits: {splits}")
        if ds.segments:
            scores = np.array([s.meta.scores.as_tuple() for s in ds.segments])
            print("alignment-score histogram (bins 0-1 .. 9-10):")
            for i, name in enumerate(store.SCORE_NAMES):
                print(_histogram_line(name, scores[:, i]))
        return 0
    if magic == projection.PARAMS_MAGIC:
        params = projection.load_params(args.path)
        print(f"projection parameters: d_a={params.d_a} hidden={params.hidden} "
              f"dropout={params.dropout_rate:.3f}")
        print(f"trainable scalars: {projection.param_count(params):,}")
        return 0
    raise FormatError(f"unrecognized magic {magic!r}", offset=0)


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "filter": _cmd_filter,
    "fuse": _cmd_fuse,
    "train": _cmd_train,
    "project": _cmd_project,
    "substitute": _cmd_substitute,
    "eval": _cmd_eval,
    "interpolate": _cmd_interpolate,
    "tradeoff": _cmd_tradeoff,
    "inspect": _cmd_inspect,
}


def run(argv) -> int:
    """Parse and execute; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        logging.basicConfig(level=args.log_level.upper())
        if args.command is None:
            raise _UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        where = f" at byte {exc.offset}" if exc.offset is not None else ""
        print(f"format error: {exc}{where}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except XmodalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(run(sys.argv[1:]))


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)
