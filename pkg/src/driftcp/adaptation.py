"""Set-size-weighted mean-teacher adaptation, one step per test batch.

Each batch is first predicted with the current model (the teacher by
default) and the configured threshold rule; those predictions are what the
metrics see.  Only then may the student take a weighted cross-entropy step
toward the teacher's soft labels, with per-sample weights derived from the
prediction-set sizes: singleton sets get weight 1, the largest set in the
batch gets (nearly) 0, empty sets are excluded entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Threshold, softmax, true_class_scores
from .errors import InvalidInput
from .model import (
    ModelPair,
    ema_update,
    forward,
    predict_probs,
    sgd_step,
    weighted_ce_loss_and_grad,
)
from .predictors import CalibrationScores, PredictorConfig, batch_threshold, predict_with_sets
from .shift import ShiftEstimate, calibration_baseline, joint_representation, shift_estimate
from .stream import CalibrationSet

__all__ = [
    "GAMMA_MODES",
    "ShiftOptions",
    "AdaptOptions",
    "CalibrationView",
    "CalibrationCache",
    "BatchOutcome",
    "gamma_weights",
    "calibration_view",
    "ctta_step",
]

GAMMA_MODES = ("set_size", "uniform")
CURRENT_MODELS = ("teacher", "student")


def gamma_weights(set_sizes, delta: float = 1e-9) -> np.ndarray:
    """Reliability weight per sample from its prediction-set size.

    ``(M - s + delta) / (M - 1 + delta)`` for nonempty sets of size ``s``,
    where ``M`` is the largest nonempty set size in the batch; empty sets get
    exactly 0.  Weights live in [0, 1] and singletons always get 1.
    """
    if delta <= 0.0:
        raise InvalidInput("delta must be positive")
    sizes = np.asarray(set_sizes, dtype=int).ravel()
    if np.any(sizes < 0):
        raise InvalidInput("set sizes must be nonnegative")
    if sizes.size == 0 or not np.any(sizes > 0):
        return np.zeros(sizes.size)
    m = int(sizes[sizes > 0].max())
    gam = (m - sizes + delta) / (m - 1.0 + delta)
    return np.where(sizes > 0, gam, 0.0)


@dataclass(frozen=True)
class ShiftOptions:
    aggregation: str = "mean"
    centering: bool = True
    # 0 keeps every calibration row; otherwise an evenly spaced subset of
    # this size is used for the divergence estimate (scores always use all)
    calib_subsample: int = 0


@dataclass(frozen=True)
class AdaptOptions:
    lr: float = 0.01
    steps_per_batch: int = 1
    delta: float = 1e-9
    gamma_mode: str = "set_size"
    current: str = "teacher"

    def __post_init__(self):
        if self.gamma_mode not in GAMMA_MODES:
            raise InvalidInput(f"gamma_mode must be one of {GAMMA_MODES}")
        if self.current not in CURRENT_MODELS:
            raise InvalidInput(f"current must be one of {CURRENT_MODELS}")
        if self.lr <= 0.0 or self.steps_per_batch < 1 or self.delta <= 0.0:
            raise InvalidInput("lr and delta must be positive, steps_per_batch >= 1")


@dataclass(frozen=True)
class CalibrationView:
    """Calibration scores and joint representations under one model version."""

    scores: CalibrationScores
    joints: np.ndarray
    baseline: float
    model_version: int


def _current_params(pair: ModelPair, current: str):
    return pair.teacher if current == "teacher" else pair.student


def _subsample_rows(rows: np.ndarray, k: int) -> np.ndarray:
    if k <= 0 or k >= rows.shape[0]:
        return rows
    idx = np.linspace(0, rows.shape[0] - 1, k).round().astype(int)
    return rows[idx]


def calibration_view(
    pair: ModelPair,
    calibration: CalibrationSet,
    shift_opts: ShiftOptions = ShiftOptions(),
    current: str = "teacher",
) -> CalibrationView:
    """Recompute scores, joints, and the centering baseline for the current model."""
    params = _current_params(pair, current)
    probs = predict_probs(params, calibration.features)
    scores = true_class_scores(probs, calibration.labels)
    src_logits = forward(pair.source, calibration.features)
    crt_logits = forward(params, calibration.features)
    joints = _subsample_rows(
        joint_representation(src_logits, crt_logits), shift_opts.calib_subsample
    )
    baseline = calibration_baseline(joints) if shift_opts.centering else 0.0
    return CalibrationView(
        scores=CalibrationScores(scores=scores, model_version=params.version),
        joints=joints,
        baseline=baseline,
        model_version=params.version,
    )


class CalibrationCache:
    """Keeps the view fresh: recomputes only when the model version moves."""

    def __init__(self):
        self._view: CalibrationView | None = None

    def get(self, pair, calibration, shift_opts, current="teacher") -> CalibrationView:
        version = _current_params(pair, current).version
        if self._view is None or self._view.model_version != version:
            self._view = calibration_view(pair, calibration, shift_opts, current)
        return self._view


@dataclass(frozen=True)
class BatchOutcome:
    """Everything one test batch produced, captured before any update."""

    points: np.ndarray
    sets: list
    threshold: Threshold
    shift: ShiftEstimate
    gammas: np.ndarray | None
    loss: float | None
    student_version: int
    teacher_version: int

    @property
    def set_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.sets], dtype=int)


def ctta_step(
    pair: ModelPair,
    features,
    calibration: CalibrationSet,
    predictor: PredictorConfig,
    adapt: bool = False,
    shift_opts: ShiftOptions = ShiftOptions(),
    adapt_opts: AdaptOptions = AdaptOptions(),
    cache: CalibrationCache | None = None,
) -> BatchOutcome:
    """Predict one batch and optionally take one adaptation step.

    The returned predictions always come from the model state at entry
    (test-then-adapt); when ``adapt`` is true, the student then takes
    ``steps_per_batch`` weighted cross-entropy steps toward the teacher and
    the teacher follows by exponential moving average.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInput("features must be a nonempty 2-D batch")
    view = (cache or CalibrationCache()).get(pair, calibration, shift_opts, adapt_opts.current)

    params = _current_params(pair, adapt_opts.current)
    crt_logits = forward(params, X)
    probs = softmax(crt_logits)
    src_logits = forward(pair.source, X)
    batch_joints = joint_representation(src_logits, crt_logits)
    shift = shift_estimate(
        view.joints,
        batch_joints,
        aggregation=shift_opts.aggregation,
        centering=shift_opts.centering,
        baseline=view.baseline if shift_opts.centering else None,
    )
    threshold = batch_threshold(view.scores, predictor, shift=shift, batch_probs=probs)
    points, sets = predict_with_sets(probs, threshold)

    gammas = None
    loss = None
    if adapt:
        if adapt_opts.gamma_mode == "uniform":
            gammas = np.ones(X.shape[0])
        else:
            gammas = gamma_weights([len(s) for s in sets], delta=adapt_opts.delta)
        for step in range(adapt_opts.steps_per_batch):
            step_loss, grads = weighted_ce_loss_and_grad(pair, X, gammas)
            if step == 0:
                loss = step_loss
            sgd_step(pair.student, grads, adapt_opts.lr)
        ema_update(pair)

    return BatchOutcome(
        points=points,
        sets=sets,
        threshold=threshold,
        shift=shift,
        gammas=gammas,
        loss=loss,
        student_version=pair.student.version,
        teacher_version=pair.teacher.version,
    )
