"""Threshold rules for building prediction sets on a test batch.

Four rules share one calibration interface:

* ``THR``: the plain split-conformal quantile.
* ``NexCP``: a recency-weighted quantile (newer calibration points weigh
  more), useful when calibration data itself drifts.
* ``QTC``: re-estimates the effective level from the test batch's scores by
  probing how the two score samples rank against each other.
* ``CUI``: adds a compensation term ``beta * rho`` to the plain quantile,
  where ``rho`` is the estimated distribution shift of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    PredictionSet,
    Threshold,
    conformal_quantile,
    prediction_set,
    validate_probabilities,
    weighted_quantile,
)
from .errors import EmptyCalibration, EmptyInput, InvalidInput
from .shift import ShiftEstimate

__all__ = [
    "METHODS",
    "SIGN_MODES",
    "QTC_LEVEL_MIN",
    "QTC_LEVEL_MAX",
    "PredictorConfig",
    "CalibrationScores",
    "thr_threshold",
    "cui_threshold",
    "nexcp_threshold",
    "qtc_level",
    "qtc_threshold",
    "predicted_class_scores",
    "batch_threshold",
    "predict_with_sets",
]

METHODS = ("THR", "NexCP", "QTC", "CUI")
SIGN_MODES = ("coverage_increasing", "literal")

QTC_LEVEL_MIN = 0.001
QTC_LEVEL_MAX = 0.999


@dataclass(frozen=True)
class PredictorConfig:
    """Method choice plus the knobs shared by the threshold rules."""

    method: str = "THR"
    alpha: float = 0.1
    beta: float = 1.0
    compensation_sign: str = "coverage_increasing"
    nexcp_decay: float = 0.99

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInput(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidInput(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.beta >= 0.0):
            raise InvalidInput(f"beta must be nonnegative, got {self.beta}")
        if self.compensation_sign not in SIGN_MODES:
            raise InvalidInput(
                f"compensation_sign must be one of {SIGN_MODES}, got {self.compensation_sign!r}"
            )
        if not (0.0 < self.nexcp_decay <= 1.0):
            raise InvalidInput(f"nexcp_decay must lie in (0, 1], got {self.nexcp_decay}")


@dataclass(frozen=True)
class CalibrationScores:
    """Nonconformity scores of the calibration set under one model version."""

    scores: np.ndarray
    model_version: int = 0

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        if s.size == 0:
            raise EmptyCalibration("calibration scores are empty")
        if not np.all(np.isfinite(s)):
            raise InvalidInput("calibration scores must be finite")
        if np.any(s < 0.0) or np.any(s > 1.0):
            raise InvalidInput("calibration scores must lie in [0, 1]")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return int(self.scores.size)


def _scores(cal) -> np.ndarray:
    if isinstance(cal, CalibrationScores):
        return cal.scores
    return np.asarray(cal, dtype=float).ravel()


def thr_threshold(cal, alpha: float) -> Threshold:
    """Plain split-conformal threshold at miscoverage ``alpha``."""
    return conformal_quantile(_scores(cal), 1.0 - alpha)


def nexcp_threshold(cal, alpha: float, config: PredictorConfig) -> Threshold:
    """Recency-weighted threshold: weight ``decay**(n - i)`` on the i-th score."""
    s = _scores(cal)
    n = s.size
    if n == 0:
        raise EmptyCalibration("nexcp_threshold needs calibration scores")
    w = config.nexcp_decay ** np.arange(n - 1, -1, -1, dtype=float)
    return weighted_quantile(s, w, 1.0 - alpha)


def qtc_level(cal, batch_scores, alpha: float) -> float:
    """Estimated miscoverage of the batch, before clamping.

    Probes the batch scores against the calibration scores from both sides
    and keeps the smaller estimate:

    * the fraction of calibration scores below the batch's alpha-quantile,
    * one minus the fraction of batch scores below the calibration
      ``1 - alpha`` quantile.
    """
    s = _scores(cal)
    b = np.asarray(batch_scores, dtype=float).ravel()
    if s.size == 0:
        raise EmptyCalibration("qtc_level needs calibration scores")
    if b.size == 0:
        raise EmptyInput("qtc_level needs a nonempty batch")
    if not np.all(np.isfinite(b)):
        raise InvalidInput("batch scores must be finite")
    batch_q = conformal_quantile(b, alpha).value
    cal_q = conformal_quantile(s, 1.0 - alpha).value
    from_cal = float(np.mean(s < batch_q))
    from_batch = 1.0 - float(np.mean(b < cal_q))
    return min(from_cal, from_batch)


def qtc_threshold(cal, batch_scores, alpha: float) -> Threshold:
    """Calibration quantile at the batch-estimated level ``1 - beta_qtc``."""
    level = qtc_level(cal, batch_scores, alpha)
    level = min(max(level, QTC_LEVEL_MIN), QTC_LEVEL_MAX)
    return conformal_quantile(_scores(cal), 1.0 - level)


def cui_threshold(cal, alpha: float, shift: ShiftEstimate, config: PredictorConfig) -> Threshold:
    """Shift-compensated threshold, clamped to [0, 1].

    In the default ``coverage_increasing`` mode the compensation is added so
    that a shifted batch gets a wider set; ``literal`` subtracts it instead.
    With ``beta == 0`` or a zero shift estimate this reduces exactly to
    :func:`thr_threshold`.
    """
    base = thr_threshold(cal, alpha)
    comp = config.beta * shift.rho_centered
    if config.compensation_sign == "literal":
        value = base.value - comp
    else:
        value = base.value + comp
    value = min(max(value, 0.0), 1.0)
    return Threshold(value=float(value), level=base.level)


def predicted_class_scores(probs) -> np.ndarray:
    """Score of each row's predicted class: ``1 - max(p)``."""
    q = validate_probabilities(probs)
    if q.ndim != 2:
        raise InvalidInput("expected a batch of probability rows")
    return 1.0 - q.max(axis=1)


def batch_threshold(
    cal,
    config: PredictorConfig,
    shift: ShiftEstimate | None = None,
    batch_probs=None,
) -> Threshold:
    """Dispatch to the configured rule for one test batch."""
    if config.method == "THR":
        return thr_threshold(cal, config.alpha)
    if config.method == "NexCP":
        return nexcp_threshold(cal, config.alpha, config)
    if config.method == "QTC":
        if batch_probs is None:
            raise InvalidInput("QTC needs the batch probabilities")
        return qtc_threshold(cal, predicted_class_scores(batch_probs), config.alpha)
    if shift is None:
        raise InvalidInput("CUI needs a shift estimate")
    return cui_threshold(cal, config.alpha, shift, config)


def predict_with_sets(probs, threshold) -> tuple[np.ndarray, list[PredictionSet]]:
    """Point predictions (argmax, lowest index on ties) and per-row sets."""
    q = validate_probabilities(probs)
    if q.ndim != 2:
        raise InvalidInput("expected a batch of probability rows")
    points = q.argmax(axis=1)
    sets = [prediction_set(row, threshold) for row in q]
    return points, sets
