"""Pure aggregation of experiment CSV rows into plottable tables.

All statistics are recomputed here from the raw rows; the harness never
pre-aggregates.  Rows carrying an error tag are excluded from aggregation.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np


class FigureInputError(Exception):
    """Bad or unusable figure input (missing columns, no data)."""


def read_rows(path: str, required: tuple) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or ())
        missing = [c for c in required if c not in fields]
        if missing:
            raise FigureInputError(f"input is missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise FigureInputError("no data: the input CSV has no rows")
    return rows


def split_method(label: str):
    """``smoother/filter`` or ``algorithm/smoother/filter`` into parts."""
    parts = label.split("/")
    if len(parts) == 2:
        return None, parts[0], parts[1]
    if len(parts) == 3:
        return parts[0], parts[1], parts[2]
    return None, label, ""


RMSE_COLUMNS = ("V", "method", "block_size", "squared_error", "error")


@dataclass(frozen=True)
class RmseSeries:
    filter_tag: str
    smoother: str
    block_size: str
    dims: tuple        # sorted V values
    rmse: tuple        # matching root-mean-square errors
    replicates: tuple  # row counts behind each point


def rmse_table(rows: list) -> list:
    """RMSE over replicates per (filter, smoother, block size, V)."""
    cells = defaultdict(list)
    for row in rows:
        if row.get("error"):
            continue
        _, smoother, filter_tag = split_method(row["method"])
        key = (filter_tag, smoother, row["block_size"])
        cells[(key, int(row["V"]))].append(float(row["squared_error"]))
    if not cells:
        raise FigureInputError("no data: every row carries an error tag")
    series = defaultdict(dict)
    for (key, dim), sq in cells.items():
        series[key][dim] = (float(np.sqrt(np.mean(sq))), len(sq))
    out = []
    for (filter_tag, smoother, block_size), by_dim in sorted(series.items()):
        dims = tuple(sorted(by_dim))
        out.append(
            RmseSeries(
                filter_tag=filter_tag,
                smoother=smoother,
                block_size=block_size,
                dims=dims,
                rmse=tuple(by_dim[d][0] for d in dims),
                replicates=tuple(by_dim[d][1] for d in dims),
            )
        )
    return out


TRACE_BASE_COLUMNS = ("method", "replicate", "p", "error")


@dataclass(frozen=True)
class EstimationBand:
    method: str
    iterates: tuple   # p values
    mean: tuple       # mean over runs of the per-run mean absolute error
    q05: tuple
    q95: tuple
    lo: tuple         # full range
    hi: tuple


def _error_columns(rows: list) -> list:
    cols = sorted(
        (c for c in rows[0] if c.startswith("err_")), key=lambda c: int(c.split("_")[1])
    )
    if not cols:
        raise FigureInputError("input is missing column(s): err_0")
    return cols


def estimation_table(rows: list) -> list:
    """Per (method, iterate): mean and quantile bands over runs of the
    per-run average absolute parameter error."""
    err_cols = _error_columns(rows)
    per_run = defaultdict(dict)
    for row in rows:
        if row.get("error"):
            continue
        value = float(np.mean([abs(float(row[c])) for c in err_cols]))
        per_run[(row["method"], int(row["p"]))].setdefault(row["replicate"], value)
    if not per_run:
        raise FigureInputError("no data: every row carries an error tag")

    by_method = defaultdict(dict)
    for (method, p), runs in per_run.items():
        by_method[method][p] = np.array(sorted(runs.values()))
    out = []
    for method, by_p in sorted(by_method.items()):
        ps = tuple(sorted(by_p))
        values = [by_p[p] for p in ps]
        out.append(
            EstimationBand(
                method=method,
                iterates=ps,
                mean=tuple(float(v.mean()) for v in values),
                q05=tuple(float(np.quantile(v, 0.05)) for v in values),
                q95=tuple(float(np.quantile(v, 0.95)) for v in values),
                lo=tuple(float(v.min()) for v in values),
                hi=tuple(float(v.max()) for v in values),
            )
        )
    return out
