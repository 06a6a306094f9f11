"""Command line entry point: ``fracspec run`` and ``fracspec validate``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .report import emit_report
from .runner import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, NumericalFailure, run

FORMATS = ("json", "csv", "text")


def _formats(text: str) -> list[str]:
    out = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in out if f not in FORMATS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {','.join(FORMATS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracspec", description="Eigenvalue perturbation experiments for the fractional Laplacian.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config and write its report")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=None, help="output directory (default: config 'output' or ./fracspec-out)")
    r.add_argument("--format", type=_formats, default=["json"], help="comma list of json,csv,text")
    r.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg['kind']})")
        return EXIT_PASS

    out = args.out or Path(cfg.get("output", "fracspec-out"))
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                report = run(cfg)
        else:
            report = run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        paths = emit_report(report, out, args.format, stem=args.config.stem)
    except OSError as e:
        print(f"cannot write report: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(report.summary())
    for p in paths:
        print(f"wrote {p}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
