"""Aggregate per-batch run CSVs into a (method, alpha) summary table."""

from __future__ import annotations

import glob
import os

import pandas as pd

from .errors import EmptyInput
from .harness import CSV_COLUMNS

__all__ = ["collect_runs", "summarise", "run_report"]

_FINAL_COLS = ["seed", "method", "alpha", "beta", "cum_err", "cum_cov", "cum_ine"]


def collect_runs(directory: str) -> pd.DataFrame:
    """Read every per-batch run CSV under ``directory``.

    Files whose header does not match the run schema (for example an earlier
    summary, or a logits dump) are skipped.  Returns one row per run: the
    final cumulative metrics of each (file, seed).
    """
    finals = []
    for path in sorted(glob.glob(os.path.join(directory, "*.csv"))):
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header != ",".join(CSV_COLUMNS):
            continue
        df = pd.read_csv(path)
        if df.empty:
            continue
        last = df.iloc[-1]
        finals.append({c: last[c] for c in _FINAL_COLS} | {"file": os.path.basename(path)})
    if not finals:
        raise EmptyInput(f"no run CSVs found under {directory}")
    return pd.DataFrame(finals)


def summarise(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and population std (ddof=0) of the final metrics per (method, alpha)."""
    grouped = runs.groupby(["method", "alpha"], sort=True)
    out = grouped.agg(
        n_runs=("seed", "size"),
        err_mean=("cum_err", "mean"),
        err_std=("cum_err", lambda s: s.std(ddof=0)),
        cov_mean=("cum_cov", "mean"),
        cov_std=("cum_cov", lambda s: s.std(ddof=0)),
        ine_mean=("cum_ine", "mean"),
        ine_std=("cum_ine", lambda s: s.std(ddof=0)),
    ).reset_index()
    out["kappa_mean"] = (1.0 - out["alpha"]) - out["cov_mean"]
    return out


def _text_table(summary: pd.DataFrame) -> str:
    cols = [
        ("method", 6, "s"),
        ("alpha", 6, ".2f"),
        ("n_runs", 6, "d"),
        ("err_mean", 9, ".4f"),
        ("err_std", 8, ".4f"),
        ("cov_mean", 9, ".4f"),
        ("cov_std", 8, ".4f"),
        ("ine_mean", 9, ".4f"),
        ("ine_std", 8, ".4f"),
        ("kappa_mean", 10, ".4f"),
    ]
    lines = ["  ".join(f"{name:>{width}}" for name, width, _ in cols)]
    for _, row in summary.iterrows():
        cells = []
        for name, width, spec in cols:
            v = row[name]
            cells.append(f"{v:>{width}{spec}}" if spec != "s" else f"{str(v):>{width}}")
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def run_report(directory: str, write_csv: bool = True) -> tuple:
    """Summarise a results directory; returns (summary frame, text table)."""
    runs = collect_runs(directory)
    summary = summarise(runs)
    if write_csv:
        summary.to_csv(os.path.join(directory, "report.csv"), index=False, float_format="%.6f")
    return summary, _text_table(summary)
