"""SVG plots for a single run CSV: coverage and set size along the stream."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

__all__ = ["write_run_plots"]


def _domain_panels(ax, df):
    for dom, sub in df.groupby("domain"):
        ax.axvline(sub["batch"].min() - 0.5, color="0.85", lw=0.8)


def write_run_plots(csv_path: str, outdir: str, stem: str) -> list:
    """Write coverage-over-batches and set-size-over-batches SVGs."""
    df = pd.read_csv(csv_path)
    alpha = float(df["alpha"].iloc[0])
    paths = []

    fig, ax = plt.subplots(figsize=(7, 3))
    _domain_panels(ax, df)
    ax.plot(df["batch"], df["batch_cov"], lw=0.7, color="0.6", label="batch")
    ax.plot(df["batch"], df["cum_cov"], lw=1.6, color="C0", label="cumulative")
    ax.axhline(1.0 - alpha, color="C3", ls="--", lw=1.0, label="nominal")
    ax.set_xlabel("batch")
    ax.set_ylabel("coverage")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    cov_path = os.path.join(outdir, f"coverage_{stem}.svg")
    fig.savefig(cov_path)
    plt.close(fig)
    paths.append(cov_path)

    fig, ax = plt.subplots(figsize=(7, 3))
    _domain_panels(ax, df)
    ax.plot(df["batch"], df["batch_ine"], lw=0.7, color="0.6", label="batch")
    ax.plot(df["batch"], df["cum_ine"], lw=1.6, color="C1", label="cumulative")
    ax.set_xlabel("batch")
    ax.set_ylabel("mean set size")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    ine_path = os.path.join(outdir, f"setsize_{stem}.svg")
    fig.savefig(ine_path)
    plt.close(fig)
    paths.append(ine_path)
    return paths
