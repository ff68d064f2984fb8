"""Command-line entry point: ``memgrid <scenario> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import (
    EXIT_CONFIG,
    EXIT_COUNTS,
    EXIT_INTERNAL,
    EXIT_IO,
    EXIT_OK,
    SCENARIOS,
    ConfigError,
    load_config,
    run_pipeline,
    validate_counts,
)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [run], [scene], [device], [circuit], [detection], ... sections")
    p.add_argument("--input", help="directory of PGM frames or a <prefix> for <prefix>NNNN.pgm")
    p.add_argument("--out", help="output directory (default memgrid-out)")
    p.add_argument("--dt", type=float, help="time step in seconds (default 1e-4)")
    p.add_argument("--seed", type=int, help="fault-injection seed (required by 'faults')")
    p.add_argument("--threshold", type=float, help="fixed edge rate threshold in ohm/s (default adaptive)")
    p.add_argument("--frames", type=int, help="use only the first N frames")
    p.add_argument("--scale", type=float, help="brightness factor for 'brightness' (default 0.5)")
    p.add_argument("--full-scale", action="store_true", default=None,
                   help="flow: run the 80x70 scene instead of 40x35 (slow)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memgrid", description="Memristive-grid motion computation scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        _common(sub.add_parser(name, help=f"run the {name} scenario"))
    vc = sub.add_parser("validate-counts", help="compare closed-form and constructed element counts")
    vc.add_argument("rows", type=int)
    vc.add_argument("cols", type=int)
    vc.add_argument("--layers", type=int, choices=(1, 2), default=2)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate-counts":
        if args.rows < 1 or args.cols < 1:
            print(json.dumps({"error": "config", "message": "rows and cols must be >= 1"}), file=sys.stderr)
            return EXIT_CONFIG
        ok, report = validate_counts(args.rows, args.cols, args.layers)
        print(json.dumps({**report, "match": ok}, indent=2))
        return EXIT_OK if ok else EXIT_COUNTS

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "scenario": args.command,
        "input": args.input,
        "out": args.out,
        "dt": args.dt,
        "seed": args.seed,
        "threshold": args.threshold,
        "frames": args.frames,
        "scale": args.scale,
        "full_scale": args.full_scale,
    }
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "exit_code": EXIT_CONFIG, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(json.dumps({"error": "io", "exit_code": EXIT_IO, "message": str(exc)}), file=sys.stderr)
        return EXIT_IO
    try:
        code, record = run_pipeline(cfg)
    except Exception as exc:  # last resort: still emit a machine-readable record
        print(json.dumps({"error": "internal", "exit_code": EXIT_INTERNAL, "message": repr(exc)}), file=sys.stderr)
        return EXIT_INTERNAL
    if code == EXIT_OK:
        print(json.dumps({"scenario": cfg.scenario, "out": cfg.out, "artifacts": len(record["artifacts"])}))
    else:
        print(json.dumps(record), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
