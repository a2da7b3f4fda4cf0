"""Command-line front end.

Subcommands: ``simulate``, ``smooth``, ``estimate``, ``oracle``, ``sweep``.
Each takes ``--config <path>`` plus optional ``--seed``, ``--out`` and
``--threads``.  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, NumericalFailure
from .experiments import (
    ORACLE_QUERIES,
    run_estimation_experiment,
    run_oracle,
    run_simulate,
    run_smoothing_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(parser: argparse.ArgumentParser, threads: bool = True):
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    if threads:
        parser.add_argument("--threads", type=int, default=1, help="replicate worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blocksmooth")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("simulate", help="write a simulated dataset"), threads=False)

    p = sub.add_parser("smooth", help="run the smoothing-error experiment")
    _add_common(p)
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes")

    p = sub.add_parser("estimate", help="run the parameter-estimation experiment")
    _add_common(p)

    p = sub.add_parser("oracle", help="query the exact Gaussian oracle")
    _add_common(p, threads=False)
    p.add_argument("--query", required=True, choices=ORACLE_QUERIES)
    p.add_argument("--data", default=None, help="data CSV (default: simulate from the config)")

    p = sub.add_parser("sweep", help="smoothing experiment over the configured V grid")
    _add_common(p)
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes")

    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _out(args):
    return args.out if args.out is not None else sys.stdout


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "simulate":
            run_simulate(config, _out(args))
        elif args.command in ("smooth", "sweep"):
            run_smoothing_experiment(config, _out(args), threads=args.threads, timing=args.timing)
        elif args.command == "estimate":
            run_estimation_experiment(config, _out(args), threads=args.threads)
        elif args.command == "oracle":
            run_oracle(config, args.query, _out(args), data_path=args.data)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
