"""Command line for the extraction adapter."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .encoders import EncoderError
from .extract import EXTRACTORS, ExtractError, ExtractorConfig, extract, merge_external
from .sffm import SffmError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csfeat",
        description="encode image-text instruction records into selection-engine inputs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="encode a dataset into features + metadata")
    p.add_argument("--dataset", required=True, help="JSONL with id, image_path, text")
    p.add_argument(
        "--extractors",
        default="clip-features",
        help=f"comma-separated subset of {', '.join(EXTRACTORS)}",
    )
    p.add_argument("--backend", choices=["hashed", "clip"], default="hashed")
    p.add_argument("--device", default="cpu")
    p.add_argument("--scores-file", dest="scores_file")
    p.add_argument("--emit-tokens", action="store_true",
                   help="also write a byte-level toy tokenization")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("merge", help="append an external score column to a feature matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--scores-file", dest="scores_file", required=True)
    p.add_argument("--out", required=True, help="output path for the widened matrix")
    p.set_defaults(func=cmd_merge)
    return parser


def cmd_extract(args) -> int:
    config = ExtractorConfig(
        dataset=Path(args.dataset),
        out_dir=Path(args.out),
        extractors=tuple(e.strip() for e in args.extractors.split(",") if e.strip()),
        backend=args.backend,
        device=args.device,
        scores_file=Path(args.scores_file) if args.scores_file else None,
        emit_tokens=args.emit_tokens,
    )
    result = extract(config)
    print(f"extracted {result.n} records at d={result.d}; skipped {len(result.skipped)}")
    return 0


def cmd_merge(args) -> int:
    n, d = merge_external(args.features, args.meta, args.scores_file, args.out)
    print(f"merged matrix is {n}x{d}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExtractError, EncoderError, SffmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
