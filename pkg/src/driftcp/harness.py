"""End-to-end experiment runs: simulate, replay, calibrate.

``simulate_run`` owns the full pipeline for one seed: build the source task,
pretrain the toy model, stream corrupted batches, score every batch before
any adaptation step, and collect one CSV row per batch.  ``replay_run``
re-scores a logits dump with any threshold rule, no model needed.

All randomness is derived from the run seed through ``child_seed`` with
fixed tags, so a rerun of the same config and seed is byte identical.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .adaptation import AdaptOptions, CalibrationCache, ShiftOptions, ctta_step
from .config import ExperimentConfig, config_hash
from .core import conformal_quantile, softmax, true_class_scores
from .errors import InvalidInput, PretrainingFloor
from .metrics import MetricsAccumulator, MetricsReport
from .model import ModelParams, accuracy, fit_supervised, forward, init_params, make_pair
from .predictors import CalibrationScores, PredictorConfig, batch_threshold, predict_with_sets
from .replay import LogitsTable, MissingCurrentLogits, write_logits
from .shift import ShiftEstimate, calibration_baseline, joint_representation, shift_estimate
from .stream import SourceTask, child_seed, make_source, severity_schedule, stream_batches

__all__ = [
    "CSV_COLUMNS",
    "RunResult",
    "format_row",
    "pretrain_source",
    "simulate_run",
    "replay_run",
    "write_run_csv",
    "run_simulate",
    "run_replay",
    "run_calibrate",
    "resolve_outdir",
]

CSV_COLUMNS = (
    "seed",
    "batch",
    "domain",
    "method",
    "alpha",
    "beta",
    "rho_raw",
    "rho_centered",
    "threshold",
    "batch_err",
    "batch_cov",
    "batch_ine",
    "cum_err",
    "cum_cov",
    "cum_ine",
    "loss",
    "mean_gamma",
    "config_hash",
)

# Seed-derivation tags; every random stream of a run forks from (seed, tag).
_TAG_TASK = 101
_TAG_SOURCE = 102
_TAG_INIT = 103
_TAG_FIT = 104
_TAG_SCHEDULE = 105


@dataclass
class RunResult:
    seed: int
    rows: list
    report: MetricsReport
    heldout_accuracy: float
    test_logits: tuple | None = None
    calib_logits: tuple | None = None


def _fmt(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf"
    if x == 0.0:
        x = 0.0  # normalise -0.0
    return f"{x:.6f}"


def format_row(row: dict) -> str:
    parts = []
    for col in CSV_COLUMNS:
        v = row[col]
        if col in ("seed", "batch", "domain"):
            parts.append(str(int(v)))
        elif col in ("method", "config_hash"):
            parts.append(str(v))
        else:
            parts.append(_fmt(v))
    return ",".join(parts)


def write_run_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")


def resolve_outdir(configured: str | None) -> str:
    return configured or os.environ.get("DRIFTCP_OUTDIR") or "results"


def pretrain_source(cfg: ExperimentConfig, task: SourceTask, splits, seed: int) -> tuple:
    """Fit the source model and enforce the heldout accuracy floor."""
    params = init_params(
        task.n_features,
        task.n_classes,
        hidden=cfg.model.hidden,
        rng=np.random.default_rng(child_seed(seed, _TAG_INIT)),
    )
    fit_supervised(
        params,
        splits.train_x,
        splits.train_y,
        epochs=cfg.model.pretrain_epochs,
        batch_size=cfg.model.pretrain_batch,
        lr=cfg.model.pretrain_lr,
        rng=np.random.default_rng(child_seed(seed, _TAG_FIT)),
    )
    acc = accuracy(params, splits.heldout_x, splits.heldout_y)
    if acc < cfg.model.accuracy_floor:
        raise PretrainingFloor(
            f"heldout accuracy {acc:.4f} below floor {cfg.model.accuracy_floor:.4f}"
        )
    return params, acc


def _predictor(cfg: ExperimentConfig) -> PredictorConfig:
    p = cfg.predictor
    return PredictorConfig(
        method=p.method,
        alpha=p.alpha,
        beta=p.beta,
        compensation_sign=p.compensation_sign,
        nexcp_decay=p.nexcp_decay,
    )


def _batch_stats(points, sets, labels) -> tuple:
    y = np.asarray(labels, dtype=int)
    n = len(y)
    err = int(np.sum(np.asarray(points, dtype=int) != y))
    cov = sum(1 for s, label in zip(sets, y) if int(label) in s)
    ine = sum(len(s) for s in sets)
    return n, err, cov, ine


def simulate_run(cfg: ExperimentConfig, seed: int) -> RunResult:
    """Run the full synthetic pipeline for one seed, in memory."""
    task = SourceTask(
        n_classes=cfg.task.n_classes,
        n_features=cfg.task.n_features,
        mean_scale=cfg.task.mean_scale,
        noise_scale=cfg.task.noise_scale,
        seed=child_seed(seed, _TAG_TASK),
    )
    splits = make_source(
        task,
        cfg.source.n_train,
        cfg.source.n_calib,
        cfg.source.n_heldout,
        construction=cfg.source.construction,
        seed=child_seed(seed, _TAG_SOURCE),
    )
    params, acc = pretrain_source(cfg, task, splits, seed)
    pair = make_pair(params, ema_momentum=cfg.model.ema_momentum)
    schedule = severity_schedule(
        task,
        kinds=cfg.stream.corruptions,
        severity=cfg.stream.severity,
        samples_per_domain=cfg.stream.samples_per_domain,
        batch_size=cfg.stream.batch_size,
        seed=child_seed(seed, _TAG_SCHEDULE),
    )
    predictor = _predictor(cfg)
    shift_opts = ShiftOptions(
        aggregation=cfg.shift.aggregation,
        centering=cfg.shift.centering,
        calib_subsample=cfg.shift.calib_subsample,
    )
    adapt_opts = AdaptOptions(
        lr=cfg.model.lr,
        steps_per_batch=cfg.model.steps_per_batch,
        delta=cfg.adapt.delta,
        gamma_mode=cfg.adapt.gamma_mode,
        current=cfg.model.current,
    )
    cache = CalibrationCache()
    metrics = MetricsAccumulator(cfg.predictor.alpha)
    chash = config_hash(cfg)

    calib_logits = None
    test_ids, test_domains, test_labels = [], [], []
    test_src, test_crt = [], []
    if cfg.export_logits:
        # Calibration logits reflect the model before any adaptation; for
        # non-adaptive runs that is the model every batch saw.
        cal = splits.calibration
        calib_logits = (
            np.arange(cal.n, dtype=np.int64),
            np.full(cal.n, -1, dtype=np.int64),
            cal.labels.copy(),
            forward(pair.source, cal.features),
            forward(pair.teacher if cfg.model.current == "teacher" else pair.student, cal.features),
        )

    rows = []
    cum_n = cum_err = cum_cov = cum_ine = 0
    sample_cursor = 0
    for batch in stream_batches(task, schedule):
        if cfg.export_logits:
            current = pair.teacher if cfg.model.current == "teacher" else pair.student
            test_ids.append(np.arange(sample_cursor, sample_cursor + batch.n, dtype=np.int64))
            test_domains.append(np.full(batch.n, batch.domain, dtype=np.int64))
            test_labels.append(batch.truth.labels.copy())
            test_src.append(forward(pair.source, batch.features))
            test_crt.append(forward(current, batch.features))
        sample_cursor += batch.n

        out = ctta_step(
            pair,
            batch.features,
            splits.calibration,
            predictor,
            adapt=cfg.adapt.enabled,
            shift_opts=shift_opts,
            adapt_opts=adapt_opts,
            cache=cache,
        )
        metrics.update(out.points, out.sets, batch.truth.labels, batch.domain)
        n, err, cov, ine = _batch_stats(out.points, out.sets, batch.truth.labels)
        cum_n += n
        cum_err += err
        cum_cov += cov
        cum_ine += ine
        rows.append(
            {
                "seed": seed,
                "batch": batch.index,
                "domain": batch.domain,
                "method": cfg.predictor.method,
                "alpha": cfg.predictor.alpha,
                "beta": cfg.predictor.beta,
                "rho_raw": out.shift.rho,
                "rho_centered": out.shift.rho_centered,
                "threshold": out.threshold.value,
                "batch_err": err / n,
                "batch_cov": cov / n,
                "batch_ine": ine / n,
                "cum_err": cum_err / cum_n,
                "cum_cov": cum_cov / cum_n,
                "cum_ine": cum_ine / cum_n,
                "loss": out.loss if out.loss is not None else 0.0,
                "mean_gamma": float(np.mean(out.gammas)) if out.gammas is not None else 0.0,
                "config_hash": chash,
            }
        )

    test_logits = None
    if cfg.export_logits:
        test_logits = (
            np.concatenate(test_ids),
            np.concatenate(test_domains),
            np.concatenate(test_labels),
            np.vstack(test_src),
            np.vstack(test_crt),
        )
    return RunResult(
        seed=seed,
        rows=rows,
        report=metrics.finalize(),
        heldout_accuracy=acc,
        test_logits=test_logits,
        calib_logits=calib_logits,
    )


def _domain_blocks(domains: np.ndarray):
    """Consecutive runs of equal domain value, as (domain, start, stop)."""
    start = 0
    for i in range(1, len(domains) + 1):
        if i == len(domains) or domains[i] != domains[start]:
            yield int(domains[start]), start, i
            start = i


def _subsample(rows: np.ndarray, k: int) -> np.ndarray:
    if k <= 0 or k >= rows.shape[0]:
        return rows
    idx = np.linspace(0, rows.shape[0] - 1, k).round().astype(int)
    return rows[idx]


def replay_run(
    test: LogitsTable, calib: LogitsTable, cfg: ExperimentConfig, seed: int = 0
) -> RunResult:
    """Re-score a logits dump under the configured threshold rule.

    Probabilities come from the crt_* columns when present, the src_*
    columns otherwise.  The divergence estimate needs both logit views in
    both files; asking for it without them is an error.
    """
    if test.n_classes != calib.n_classes:
        raise InvalidInput("test and calibration dumps disagree on class count")
    both_views = test.has_current and calib.has_current
    if cfg.predictor.method == "CUI" and not both_views:
        raise MissingCurrentLogits(
            "CUI replay needs crt_* columns in both the test and calibration files"
        )

    cal_probs = softmax(calib.crt if calib.has_current else calib.src)
    cal_scores = CalibrationScores(
        scores=true_class_scores(cal_probs, calib.labels), model_version=0
    )
    cal_joints = None
    baseline = 0.0
    if both_views:
        cal_joints = _subsample(
            joint_representation(calib.src, calib.crt), cfg.shift.calib_subsample
        )
        if cfg.shift.centering:
            baseline = calibration_baseline(cal_joints)

    predictor = _predictor(cfg)
    metrics = MetricsAccumulator(cfg.predictor.alpha)
    chash = config_hash(cfg)
    rows = []
    cum_n = cum_err = cum_cov = cum_ine = 0
    batch_index = 0
    bs = cfg.stream.batch_size
    for domain, start, stop in _domain_blocks(test.domains):
        for lo in range(start, stop, bs):
            hi = min(lo + bs, stop)
            probs = softmax(test.crt[lo:hi] if test.has_current else test.src[lo:hi])
            if both_views:
                batch_joints = joint_representation(test.src[lo:hi], test.crt[lo:hi])
                shift = shift_estimate(
                    cal_joints,
                    batch_joints,
                    aggregation=cfg.shift.aggregation,
                    centering=cfg.shift.centering,
                    baseline=baseline if cfg.shift.centering else None,
                )
            else:
                shift = ShiftEstimate(
                    rho=0.0, rho_baseline=0.0, rho_centered=0.0,
                    aggregation=cfg.shift.aggregation,
                )
            threshold = batch_threshold(cal_scores, predictor, shift=shift, batch_probs=probs)
            points, sets = predict_with_sets(probs, threshold)
            labels = test.labels[lo:hi]
            metrics.update(points, sets, labels, domain)
            n, err, cov, ine = _batch_stats(points, sets, labels)
            cum_n += n
            cum_err += err
            cum_cov += cov
            cum_ine += ine
            rows.append(
                {
                    "seed": seed,
                    "batch": batch_index,
                    "domain": domain,
                    "method": cfg.predictor.method,
                    "alpha": cfg.predictor.alpha,
                    "beta": cfg.predictor.beta,
                    "rho_raw": shift.rho,
                    "rho_centered": shift.rho_centered,
                    "threshold": threshold.value,
                    "batch_err": err / n,
                    "batch_cov": cov / n,
                    "batch_ine": ine / n,
                    "cum_err": cum_err / cum_n,
                    "cum_cov": cum_cov / cum_n,
                    "cum_ine": cum_ine / cum_n,
                    "loss": 0.0,
                    "mean_gamma": 0.0,
                    "config_hash": chash,
                }
            )
            batch_index += 1
    return RunResult(seed=seed, rows=rows, report=metrics.finalize(), heldout_accuracy=float("nan"))


def run_simulate(cfg: ExperimentConfig, outdir: str | None = None) -> dict:
    """Run every configured seed and write one CSV (plus optional dumps) each."""
    outdir = resolve_outdir(outdir or cfg.output_dir)
    os.makedirs(outdir, exist_ok=True)
    stem = f"{cfg.predictor.method.lower()}_a{cfg.predictor.alpha:g}"
    artifacts = {"csv": [], "logits": [], "plots": [], "results": {}}
    for seed in cfg.seeds:
        result = simulate_run(cfg, seed)
        path = os.path.join(outdir, f"sim_{stem}_s{seed}.csv")
        write_run_csv(result.rows, path)
        artifacts["csv"].append(path)
        artifacts["results"][seed] = result
        if cfg.export_logits:
            test_path = os.path.join(outdir, f"logits_test_s{seed}.csv")
            calib_path = os.path.join(outdir, f"logits_calib_s{seed}.csv")
            write_logits(test_path, *result.test_logits[:3], result.test_logits[3], result.test_logits[4])
            write_logits(calib_path, *result.calib_logits[:3], result.calib_logits[3], result.calib_logits[4])
            artifacts["logits"] += [test_path, calib_path]
        if cfg.plots:
            from .plots import write_run_plots

            artifacts["plots"] += write_run_plots(path, outdir, stem=f"{stem}_s{seed}")
    return artifacts


def run_replay(
    test_path, calib_path, cfg: ExperimentConfig, seed: int = 0, outdir: str | None = None
) -> tuple:
    from .replay import read_logits

    test = read_logits(test_path)
    calib = read_logits(calib_path)
    result = replay_run(test, calib, cfg, seed=seed)
    outdir = resolve_outdir(outdir or cfg.output_dir)
    os.makedirs(outdir, exist_ok=True)
    stem = f"{cfg.predictor.method.lower()}_a{cfg.predictor.alpha:g}"
    path = os.path.join(outdir, f"replay_{stem}_s{seed}.csv")
    write_run_csv(result.rows, path)
    return path, result


def run_calibrate(calib_path, alpha: float) -> dict:
    """Report the plain conformal threshold for a calibration dump."""
    from .replay import read_logits

    calib = read_logits(calib_path)
    probs = softmax(calib.crt if calib.has_current else calib.src)
    scores = true_class_scores(probs, calib.labels)
    tau = conformal_quantile(scores, 1.0 - alpha)
    return {
        "n": calib.n,
        "alpha": float(alpha),
        "tau_star": float(tau.value),
        "source": "crt" if calib.has_current else "src",
    }
