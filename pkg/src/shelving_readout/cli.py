"""Command-line experiment runner.

Subcommands: shelving-decay, two-state, three-state, freq-select. Every
run validates the configuration first, then writes CSV data and a JSON
report into the output directory. Exit codes: 0 success, 2 configuration
error, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .config import ConfigError, load_config, validate_config
from .experiments import (
    run_frequency_selection,
    run_shelving_decay,
    run_three_state,
    run_two_state,
)
from .levels import DegenerateRatesError
from .metrics import FitConvergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_RUNNERS = {
    "shelving-decay": run_shelving_decay,
    "two-state": run_two_state,
    "three-state": run_three_state,
    "freq-select": run_frequency_selection,
}


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="TOML configuration file")
    sub.add_argument("--seed", type=int, metavar="U64", help="override the run seed")
    sub.add_argument("--shots", type=int, metavar="N", help="override shots per prepared state")
    sub.add_argument("--out", metavar="DIR", help="output directory (default: out/<command>)")
    sub.add_argument(
        "--discriminator",
        choices=("auto", "threshold", "gaussian", "truth-table", "fnn"),
        help="classifier to headline in the report",
    )
    sub.add_argument(
        "--no-shelving", action="store_true", help="disable the shelving pulse sequence"
    )
    sub.add_argument("--workers", type=int, metavar="N", help="worker processes for shot generation")
    sub.add_argument("--mode", choices=("single-tone-2state", "single-tone-3state", "two-tone-3state"),
                     help="readout mode override (three-state only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shelving-readout",
        description="Simulated shelved dispersive readout experiments for a multilevel transmon.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("shelving-decay", help="ground-state return curves and rate fits")
    sub.add_parser("two-state", help="two-state readout fidelity with and without shelving")
    sub.add_parser("three-state", help="three-state readout: two-tone truth table and network")
    sub.add_parser("freq-select", help="response traces and readout frequency selection")
    for name in _RUNNERS:
        _add_common_flags(sub.choices[name])
    return parser


def _configure(args: argparse.Namespace):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.shots is not None:
        overrides["shots"] = args.shots
    if args.discriminator is not None:
        overrides["discriminator"] = args.discriminator
    if args.no_shelving:
        overrides["shelving"] = False
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = args.out or f"out/{args.command}"

    try:
        cfg = _configure(args)
        report = _RUNNERS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateRatesError, FitConvergenceError, np.linalg.LinAlgError,
            ArithmeticError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"{report.experiment}: config {report.config_hash}, seed {report.seed}")
    print(json.dumps(report.summary, sort_keys=True, indent=2))
    print(f"outputs in {out_dir}: {', '.join(report.outputs)}")
    print(f"wall time: {report.wall_time_s:.2f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
