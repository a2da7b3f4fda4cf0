"""Figure rendering for blocksmooth experiment CSVs."""

from .aggregate import (
    EstimationBand,
    FigureInputError,
    RmseSeries,
    estimation_table,
    read_rows,
    rmse_table,
)
from .plot import plot_estimation, plot_rmse

__version__ = "0.1.0"
