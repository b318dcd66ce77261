"""Command-line entry point for the benchmark studies.

Subcommands: project, beam-study, elasticity-study, infsup, spy.  Each takes
a JSON config (--config), an output directory (--out), a worker count
(--threads), and an optional --verify flag that runs the invariant suite
before the study.  Exit codes: 0 ok, 1 config error, 2 numerical failure,
3 invariant violation under --verify.
"""

import argparse
import os
import sys

from .bench import ConfigError, load_config, run, verify_invariants
from .numerics import NumericsError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bezbar",
        description="Locking benchmark studies for locally projected "
                    "spline discretizations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("project", "beam-study", "elasticity-study", "infsup", "spy"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=False,
                         help="JSON config path (defaults apply without it)")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--threads", type=int, default=1)
        cmd.add_argument("--verify", action="store_true",
                         help="run the invariant suite first")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config, expect_kind=args.command)
        else:
            cfg = {"kind": args.command, "seed": 0}
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    if args.verify:
        failures = verify_invariants(seed=cfg.get("seed", 0))
        if failures:
            for name in failures:
                print(f"invariant violated: {name}", file=sys.stderr)
            return 3

    os.makedirs(args.out, exist_ok=True)
    try:
        paths = run(cfg, args.out, threads=args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
