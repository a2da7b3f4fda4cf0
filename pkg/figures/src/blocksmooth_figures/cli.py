"""``figures`` command line: render experiment CSVs to images.

    figures rmse --in results.csv --out rmse.png
    figures estimation --in trace.csv --out errors.svg

Exit codes: 0 success, 2 unusable input, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .aggregate import (
    RMSE_COLUMNS,
    TRACE_BASE_COLUMNS,
    FigureInputError,
    estimation_table,
    read_rows,
    rmse_table,
)
from .plot import plot_estimation, plot_rmse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figures")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("rmse", "estimation"):
        p = sub.add_parser(name)
        p.add_argument("--in", dest="input", required=True, help="experiment CSV")
        p.add_argument("--out", dest="output", required=True, help="image path (.png/.svg)")
        p.add_argument("--title", default=None)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rmse":
            rows = read_rows(args.input, RMSE_COLUMNS)
            series = rmse_table(rows)
            plot_rmse(series, args.output, args.title or "smoothing error")
        else:
            rows = read_rows(args.input, TRACE_BASE_COLUMNS)
            bands = estimation_table(rows)
            plot_estimation(bands, args.output, args.title or "parameter-estimation error")
        return 0
    except FigureInputError as exc:
        print(f"figures: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"figures: i/o error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
