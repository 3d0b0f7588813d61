"""Command-line entry point.

    rootpipe --config exp.json [--mode standard|screening|eval|fpca] [--out DIR] [--threads N]
    rootpipe generate {standard,screening} --out DIR [--frames N] [--seed S]
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import MODES, ConfigError, load_config
from .mask_io import MaskError
from .pipeline import run_eval, run_fpca, run_screening, run_standard
from .synthetic import generate_screening, generate_standard

log = logging.getLogger("rootpipe")


def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rootpipe", description="Post-segmentation root phenotyping pipeline.")
    p.add_argument("--config", required=True, help="experiment JSON document")
    p.add_argument("--mode", choices=MODES, help="override the config mode")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--threads", type=int, help="worker threads (default: ROOTPIPE_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _generate_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rootpipe generate", description="Write a synthetic mask sequence and config.")
    p.add_argument("kind", choices=("standard", "screening"))
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, help="number of frames")
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "generate":
        args = _generate_parser().parse_args(argv[1:])
        kwargs = {"seed": args.seed}
        if args.frames is not None:
            kwargs["n_frames"] = args.frames
        gen = generate_standard if args.kind == "standard" else generate_screening
        print(gen(args.out, **kwargs))
        return 0

    args = _run_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.mode, args.out)
    except (ConfigError, OSError) as exc:
        print(f"rootpipe: config error: {exc}", file=sys.stderr)
        return 2
    try:
        if cfg.mode == "standard":
            result = run_standard(cfg, args.threads)
        elif cfg.mode == "screening":
            result = run_screening(cfg, args.threads)
        elif cfg.mode == "eval":
            result = run_eval(cfg)
        else:
            result = run_fpca(cfg)
    except (MaskError, ValueError, OSError) as exc:
        print(f"rootpipe: error: {exc}", file=sys.stderr)
        return 1
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(result.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
