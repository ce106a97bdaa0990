"""Command-line shell over :mod:`paxoscp.harness`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (EXIT_CONFIG, ConfigError, available_suites, load_suite, override,
                      run_suite, verify_trace)
from .workload import csv_text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paxoscp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment suite")
    run.add_argument("--suite", required=True,
                     help=f"shipped suite ({', '.join(available_suites())}) or JSON file")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=int, help="run this one seed instead of the suite's")
    run.add_argument("--protocol", type=str.lower, choices=["basic", "cp"],
                     help="only cells using this protocol")
    run.add_argument("--loss", type=float, help="message loss probability for every cell")
    run.add_argument("--promotion-cap", type=int, help="maximum promotions per transaction")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--save-traces", action="store_true",
                     help="also write each run's history as JSON lines")

    ver = sub.add_parser("verify", help="check a JSON-lines history trace")
    ver.add_argument("--trace", required=True, type=Path)
    ver.add_argument("--brute-force", action="store_true",
                     help="also search all serial orders (small traces only)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return verify_trace(args.trace, args.brute_force)
    try:
        spec = load_suite(args.suite, args.out)
        spec = override(spec, args.seed, args.protocol, args.loss, args.promotion_cap)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_suite(spec, jobs=args.jobs, save_traces=args.save_traces)
    sys.stdout.write(csv_text(result.rows))
    for label, seed, exc in result.violations:
        print(f"VIOLATION {label} seed {seed}: {exc}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
