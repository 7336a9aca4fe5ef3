"""Command-line entry point.

    mcwave run <config> [--H n] [--scheme s]... [--threads k] [--full]
               [--expect-blowup] [--out dir]

<config> is either a sectioned key=value file or a builtin experiment name
(example1 .. example4).  Exit codes: 0 success, 2 configuration error,
3 numerical failure or unexpected blowup.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, McwaveError
from .pipeline import builtin_config, load_config, run_experiment, write_artifacts

BUILTINS = ("example1", "example2", "example3", "example4")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcwave",
                                description="Multicontinuum splitting wave solver")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment pipeline")
    run.add_argument("config", help="config file path or builtin name "
                                    f"({', '.join(BUILTINS)})")
    run.add_argument("--H", type=int, default=None, metavar="N",
                     help="coarse blocks per axis (overrides config)")
    run.add_argument("--l", type=int, default=None, help="oversampling layers")
    run.add_argument("--scheme", action="append", default=None,
                     help="scheme to run (repeatable)")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--full", action="store_true",
                     help="full-scale fine grid (nx=400) instead of desk scale (200)")
    run.add_argument("--expect-blowup", action="store_true",
                     help="treat stepper blowup as the expected outcome")
    run.add_argument("--out", default="mcwave_out", help="artifact directory")
    run.add_argument("--threshold", type=float, default=None,
                     help="eigen-gap ratio threshold")
    run.add_argument("--cache", action="store_true", help="cache cell bases on disk")
    return p


def cmd_run(args) -> int:
    nx = 400 if args.full else 200
    if args.config in BUILTINS:
        cfg = builtin_config(args.config, nx=nx,
                             nH=args.H if args.H is not None else 10)
    else:
        if not Path(args.config).exists():
            raise ConfigurationError(f"config {args.config!r} is neither a file "
                                     f"nor a builtin name {BUILTINS}")
        cfg = load_config(args.config)
        if args.H is not None:
            cfg = replace(cfg, nH=args.H)
        if args.full:
            cfg = replace(cfg, nx=400)
    if args.l is not None:
        cfg = replace(cfg, layers=args.l)
    if args.scheme:
        cfg = replace(cfg, schemes=tuple(args.scheme))
    if args.threshold is not None:
        cfg = replace(cfg, threshold=args.threshold)
    cfg = replace(cfg, threads=args.threads, cache=args.cache or cfg.cache)
    cfg.validate()

    result = run_experiment(cfg, expect_blowup=args.expect_blowup)
    out = write_artifacts(result, args.out)

    blown = {s: b for s, b in result.blowups.items() if b is not None}
    for scheme in cfg.schemes:
        state = f"blowup at step {blown[scheme]}" if scheme in blown else "ok"
        print(f"{scheme}: {state}")
    print(f"artifacts written to {out}")
    if blown and not args.expect_blowup:
        print("error: unexpected blowup", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except McwaveError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
