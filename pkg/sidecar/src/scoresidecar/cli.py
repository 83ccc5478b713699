"""Entry point: load models per config and serve the scoring protocol."""

from __future__ import annotations

import argparse
import logging
import sys

from .backends import BackendError
from .server import serve
from .service import SidecarConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoring-sidecar",
        description="Serve reranking, entailment, and similarity scoring over HTTP.",
    )
    parser.add_argument("--port", type=int, default=8081)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--nli-model", default="embedded", help="'embedded' or a model checkpoint id"
    )
    parser.add_argument("--rerank-model", default="embedded")
    parser.add_argument("--similarity-model", default="embedded")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = SidecarConfig(
            nli_model=args.nli_model,
            rerank_model=args.rerank_model,
            similarity_model=args.similarity_model,
            device=args.device,
            batch_size=args.batch_size,
            port=args.port,
        )
        serve(config)
    except (BackendError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
