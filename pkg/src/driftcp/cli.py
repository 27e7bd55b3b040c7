"""Command-line entry point.

Subcommands
-----------
simulate   run the synthetic corruption stream for every configured seed
replay     re-score a logits dump under any threshold rule
calibrate  print the plain conformal threshold for a calibration dump
report     aggregate run CSVs in a directory into a summary table

Exit codes: 0 success, 2 bad configuration or input file, 3 pretraining
below the accuracy floor, 4 replay needs crt_* logits that are missing,
5 malformed logits row.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import load_config
from .errors import (
    EmptyCalibration,
    EmptyInput,
    InvalidConfig,
    InvalidInput,
    PretrainingFloor,
)
from .replay import MalformedRow, MissingCurrentLogits

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_PRETRAIN = 3
EXIT_NO_CURRENT_LOGITS = 4
EXIT_MALFORMED_ROW = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftcp",
        description="Conformal prediction with shift-compensated thresholds on a continual corruption stream.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, with_sim_flags=False):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-path config override, e.g. predictor.beta=2.0 (repeatable)",
        )
        p.add_argument("--seed", type=int, help="run a single seed")
        p.add_argument("--method", choices=["THR", "NexCP", "QTC", "CUI"])
        p.add_argument("--alpha", type=float, help="miscoverage level in (0, 1)")
        p.add_argument("--beta", type=float, help="compensation strength")
        p.add_argument("--output-dir", help="where to write CSVs (default: $DRIFTCP_OUTDIR or ./results)")
        if with_sim_flags:
            p.add_argument("--export-logits", action="store_true", help="also dump per-sample logits")
            p.add_argument("--plots", action="store_true", help="write coverage/set-size SVGs per run")

    p_sim = sub.add_parser("simulate", help="run the synthetic stream")
    add_config_args(p_sim, with_sim_flags=True)

    p_rep = sub.add_parser("replay", help="re-score a logits dump")
    add_config_args(p_rep)
    p_rep.add_argument("--test-logits", required=True, help="test-stream logits CSV")
    p_rep.add_argument("--calib-logits", required=True, help="calibration logits CSV")
    p_rep.add_argument("--batch-size", type=int, help="rebatching size (default from config)")

    p_cal = sub.add_parser("calibrate", help="print the split-conformal threshold")
    p_cal.add_argument("--calib-logits", required=True, help="calibration logits CSV")
    p_cal.add_argument("--alpha", type=float, required=True, help="miscoverage level in (0, 1)")

    p_report = sub.add_parser("report", help="summarise run CSVs")
    p_report.add_argument("--dir", default=None, help="results directory (default: $DRIFTCP_OUTDIR or ./results)")
    p_report.add_argument("--no-csv", action="store_true", help="print only, do not write report.csv")
    return parser


def _config_from_args(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seeds=[{int(args.seed)}]")
    if args.method is not None:
        overrides.append(f"predictor.method={args.method}")
    if args.alpha is not None:
        overrides.append(f"predictor.alpha={args.alpha!r}")
    if args.beta is not None:
        overrides.append(f"predictor.beta={args.beta!r}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if getattr(args, "export_logits", False):
        overrides.append("export_logits=true")
    if getattr(args, "plots", False):
        overrides.append("plots=true")
    if getattr(args, "batch_size", None) is not None:
        overrides.append(f"stream.batch_size={int(args.batch_size)}")
    return load_config(args.config, overrides)


def _cmd_simulate(args) -> int:
    from .harness import run_simulate

    cfg = _config_from_args(args)
    artifacts = run_simulate(cfg)
    for seed, path in zip(cfg.seeds, artifacts["csv"]):
        result = artifacts["results"][seed]
        o = result.report.overall
        print(
            f"seed {seed}: n={o.n} acc={result.heldout_accuracy:.4f} "
            f"ERR={o.err:.4f} COV={o.cov:.4f} INE={o.ine:.4f} kappa={o.kappa:.4f} -> {path}"
        )
    for path in artifacts["logits"] + artifacts["plots"]:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    from .harness import run_replay

    cfg = _config_from_args(args)
    seed = args.seed if args.seed is not None else 0
    path, result = run_replay(args.test_logits, args.calib_logits, cfg, seed=seed)
    o = result.report.overall
    print(f"replay: n={o.n} ERR={o.err:.4f} COV={o.cov:.4f} INE={o.ine:.4f} kappa={o.kappa:.4f} -> {path}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    from .harness import run_calibrate

    info = run_calibrate(args.calib_logits, args.alpha)
    print(
        f"n={info['n']} alpha={info['alpha']:.6f} tau_star={info['tau_star']:.6f} "
        f"(scores from {info['source']} logits)"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    from .harness import resolve_outdir
    from .report import run_report

    directory = resolve_outdir(args.dir)
    summary, text = run_report(directory, write_csv=not args.no_csv)
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "replay": _cmd_replay,
        "calibrate": _cmd_calibrate,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except MalformedRow as exc:
        print(f"error: malformed logits row: {exc}", file=sys.stderr)
        return EXIT_MALFORMED_ROW
    except MissingCurrentLogits as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CURRENT_LOGITS
    except PretrainingFloor as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRETRAIN
    except (
        InvalidConfig,
        InvalidInput,
        EmptyInput,
        EmptyCalibration,
        FileNotFoundError,
        yaml.YAMLError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
