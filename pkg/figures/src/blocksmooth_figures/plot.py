"""Matplotlib rendering of the aggregated tables.

One RMSE panel per filter approximation (mirroring the paper's layout),
lines per smoother and block size, linear axes.  Estimation panels show
the mean error per iterate with the (0.05, 0.95) quantile band and the
full range of encountered realisations.
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_COLORS = {"std": "tab:purple", "blk": "tab:green"}
_STYLES = {"fs": "-", "bs": "--"}


def _series_style(smoother: str):
    family = "blk" if smoother.startswith("blk") else "std"
    variant = "bs" if smoother.endswith("bs") else "fs"
    return _COLORS[family], _STYLES[variant]


def plot_rmse(series: list, out_path: str, title: str = "smoothing error"):
    """Render RMSE-vs-dimension panels grouped by filter approximation."""
    panels = defaultdict(list)
    for s in series:
        panels[s.filter_tag].append(s)
    tags = sorted(panels)
    fig, axes = plt.subplots(
        len(tags), 1, figsize=(6.0, 2.6 * len(tags)), squeeze=False, sharex=True
    )
    for ax, tag in zip(axes[:, 0], tags):
        for s in sorted(panels[tag], key=lambda s: (s.smoother, s.block_size)):
            color, style = _series_style(s.smoother)
            ax.plot(
                s.dims,
                s.rmse,
                style,
                color=color,
                marker="o",
                markersize=3,
                label=f"{s.smoother} |K|={s.block_size}",
            )
        ax.set_ylabel("RMSE")
        ax.set_title(f"filter: {tag}", fontsize=9)
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("model dimension V")
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_estimation(bands: list, out_path: str, title: str = "parameter-estimation error"):
    """Render per-iterate error traces with quantile and range shading."""
    fig, axes = plt.subplots(
        len(bands), 1, figsize=(6.0, 2.4 * len(bands)), squeeze=False, sharex=True
    )
    for ax, band in zip(axes[:, 0], bands):
        ax.fill_between(band.iterates, band.lo, band.hi, color="0.85", label="range")
        ax.fill_between(band.iterates, band.q05, band.q95, color="0.65", label="(0.05, 0.95)")
        ax.plot(band.iterates, band.mean, color="tab:blue", label="mean")
        ax.set_ylabel("avg |error|")
        ax.set_title(band.method, fontsize=9)
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("iteration p")
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
