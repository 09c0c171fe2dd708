"""Command-line front end; mirrors the primary toolkit's flag style."""

from __future__ import annotations

import argparse
import sys

from xmodal.errors import (ConfigError, FormatError, ValidationError,
                           XmodalError)

from .config import AUDIO_ENCODERS, ExtractorConfig
from .errors import MediaError, SetupError
from .pipeline import extract


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="xmodal-extract",
                     description="export encoder embeddings to an AVEB dataset")
    parser.add_argument("--audio", required=True, help="WAV file")
    parser.add_argument("--video", required=True, help="video file")
    parser.add_argument("--audio-encoder", required=True,
                        choices=sorted(AUDIO_ENCODERS))
    parser.add_argument("--encoder-path", required=True,
                        help="local directory (or hub id) of the audio model")
    parser.add_argument("--clip-path", required=True,
                        help="local directory (or hub id) of the vision model")
    parser.add_argument("--segment-length", type=float, default=3.0)
    parser.add_argument("--split", default="test",
                        choices=["train", "val", "test"])
    parser.add_argument("--default-score", type=float, default=5.0)
    parser.add_argument("--scores", default=None,
                        help="optional JSONL of per-id alignment scores")
    parser.add_argument("--max-segments", type=int, default=None)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True)
    return parser


def run(argv) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = ExtractorConfig(
            audio_encoder=args.audio_encoder, encoder_path=args.encoder_path,
            clip_path=args.clip_path, audio_path=args.audio,
            video_path=args.video, out_path=args.out,
            segment_length=args.segment_length, split=args.split,
            default_score=args.default_score, scores_path=args.scores,
            max_segments=args.max_segments, device=args.device)
        result = extract(cfg)
        print(f"wrote {result.n_segments} segments to {result.out_path}"
              + (f" ({len(result.skipped)} skipped)" if result.skipped else ""))
        return 0
    except (ConfigError, ValidationError, SetupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, MediaError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except XmodalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(run(sys.argv[1:]))
