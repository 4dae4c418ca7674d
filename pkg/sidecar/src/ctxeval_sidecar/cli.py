"""Command line entry point: load the models and serve until interrupted."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .engine import (
    DEFAULT_FILL_MODEL,
    DEFAULT_GEN_MODEL,
    InferenceEngine,
    SidecarConfig,
)
from .server import SidecarServer

log = logging.getLogger("ctxeval_sidecar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxeval-sidecar",
        description="Serve fill-mask, scoring and greedy generation over HTTP "
                    "for the ctxeval provider protocol.",
    )
    parser.add_argument(
        "--fill-model",
        default=os.environ.get("SIDECAR_FILL_MODEL", DEFAULT_FILL_MODEL),
        help="masked-LM name or path for /fill_mask",
    )
    parser.add_argument(
        "--gen-model",
        default=os.environ.get("SIDECAR_GEN_MODEL", DEFAULT_GEN_MODEL),
        help="generative model name or path for /score and /generate",
    )
    parser.add_argument("--device", default=os.environ.get("SIDECAR_DEVICE", "cpu"))
    parser.add_argument(
        "--port", type=int, default=int(os.environ.get("SIDECAR_PORT", "8011"))
    )
    parser.add_argument(
        "--host", default=os.environ.get("SIDECAR_HOST", "127.0.0.1")
    )
    parser.add_argument(
        "--max-batch", type=int, default=int(os.environ.get("SIDECAR_MAX_BATCH", "16"))
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = SidecarConfig(
            fill_model=args.fill_model,
            gen_model=args.gen_model,
            device=args.device,
            port=args.port,
            max_batch=args.max_batch,
        )
        log.info("loading fill model %s", config.fill_model)
        log.info("loading gen model %s", config.gen_model)
        engine = InferenceEngine(config)
    except Exception as exc:
        log.error("startup failed: %s", exc)
        return 1
    server = SidecarServer(engine, host=args.host)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        log.info("shutting down")
    return 0


if __name__ == "__main__":
    sys.exit(main())
