"""Split-conformal primitives: softmax, nonconformity scores, quantiles, sets.

The nonconformity score of class ``y`` under a probability vector ``p`` is
``1 - p[y]``; low scores mean high confidence.  Thresholds are order
statistics of calibration scores (plain or weighted), and a prediction set
keeps every class whose score is strictly below the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCalibration, InvalidInput

__all__ = [
    "Threshold",
    "PredictionSet",
    "softmax",
    "validate_probabilities",
    "nonconformity_score",
    "true_class_scores",
    "conformal_quantile",
    "weighted_quantile",
    "prediction_set",
]


@dataclass(frozen=True)
class Threshold:
    """A score cutoff together with the coverage level that produced it.

    ``value`` may be ``math.inf`` for weighted quantiles whose finite mass is
    insufficient; an infinite cutoff admits every class.
    """

    value: float
    level: float

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise InvalidInput(f"level must lie in (0, 1), got {self.level}")
        if math.isnan(self.value):
            raise InvalidInput("threshold value is NaN")


@dataclass(frozen=True)
class PredictionSet:
    """Ordered class indices whose scores fell strictly below ``threshold``."""

    classes: tuple[int, ...]
    threshold: float

    @property
    def size(self) -> int:
        return len(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, label) -> bool:
        return int(label) in self.classes


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax over the last axis.

    Accepts a single logit vector or a 2-D array of row vectors and returns
    probabilities of the same shape.

    Raises
    ------
    InvalidInput
        If any entry is non-finite or fewer than two classes are given.
    """
    z = np.asarray(logits, dtype=float)
    if z.ndim not in (1, 2):
        raise InvalidInput(f"logits must be 1-D or 2-D, got shape {z.shape}")
    if z.shape[-1] < 2:
        raise InvalidInput("softmax needs at least two entries")
    if not np.all(np.isfinite(z)):
        raise InvalidInput("logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def validate_probabilities(p) -> np.ndarray:
    """Check that ``p`` is a probability vector (or rows of them).

    Entries must lie in [0, 1] and each row must sum to 1 within 1e-9.
    Returns the validated array as float64.
    """
    q = np.asarray(p, dtype=float)
    if q.ndim not in (1, 2):
        raise InvalidInput(f"probabilities must be 1-D or 2-D, got shape {q.shape}")
    if q.shape[-1] < 2:
        raise InvalidInput("need at least two classes")
    if not np.all(np.isfinite(q)):
        raise InvalidInput("probabilities must be finite")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise InvalidInput("probabilities must lie in [0, 1]")
    sums = q.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise InvalidInput("probabilities must sum to 1 within 1e-9")
    return q


def nonconformity_score(p, label: int) -> float:
    """Score of ``label`` under probability vector ``p``: ``1 - p[label]``."""
    q = validate_probabilities(p)
    if q.ndim != 1:
        raise InvalidInput("nonconformity_score expects a single probability vector")
    k = int(label)
    if not (0 <= k < q.shape[0]):
        raise InvalidInput(f"label {k} outside [0, {q.shape[0]})")
    return float(1.0 - q[k])


def true_class_scores(probs: np.ndarray, labels) -> np.ndarray:
    """Vectorised ``1 - p[i, labels[i]]`` over rows of ``probs``."""
    q = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=int)
    if q.ndim != 2 or y.ndim != 1 or q.shape[0] != y.shape[0]:
        raise InvalidInput("probs must be (n, K) and labels (n,)")
    if np.any(y < 0) or np.any(y >= q.shape[1]):
        raise InvalidInput("labels outside class range")
    return 1.0 - q[np.arange(q.shape[0]), y]


def _check_level(level: float) -> float:
    level = float(level)
    if not (0.0 < level < 1.0):
        raise InvalidInput(f"level must lie in (0, 1), got {level}")
    return level


def conformal_quantile(scores, level: float) -> Threshold:
    """The k-th smallest score with ``k = ceil((n + 1) * level)``, capped at n.

    This is the finite-sample-corrected empirical quantile used by split
    conformal prediction.  Ties are resolved by value (stable sort), so the
    returned value is always one of the input scores.
    """
    level = _check_level(level)
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise EmptyCalibration("conformal_quantile needs at least one score")
    if not np.all(np.isfinite(s)):
        raise InvalidInput("scores must be finite")
    n = s.size
    k = int(math.ceil((n + 1) * level))
    k = min(k, n)
    ordered = np.sort(s, kind="stable")
    return Threshold(value=float(ordered[k - 1]), level=level)


def weighted_quantile(scores, weights, level: float) -> Threshold:
    """Smallest score at which the weighted CDF reaches ``level``.

    A virtual unit mass at +inf is appended before normalising, matching the
    exchangeability-weighted construction: the returned value is the smallest
    ``s`` with ``sum(w_i for s_i <= s) >= level * (sum(w) + 1)``.  When no
    finite score carries enough mass the threshold is +inf, which means
    "admit every class".
    """
    level = _check_level(level)
    s = np.asarray(scores, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if s.size == 0:
        raise EmptyCalibration("weighted_quantile needs at least one score")
    if s.shape != w.shape:
        raise InvalidInput(f"scores and weights differ in length: {s.size} vs {w.size}")
    if not np.all(np.isfinite(s)):
        raise InvalidInput("scores must be finite")
    if not np.all(np.isfinite(w)):
        raise InvalidInput("weights must be finite")
    if np.any(w < 0.0):
        raise InvalidInput("weights must be nonnegative")
    if not np.any(w > 0.0):
        raise InvalidInput("weights must not all be zero")

    order = np.argsort(s, kind="stable")
    cum = np.cumsum(w[order])
    total = float(w.sum()) + 1.0
    hit = np.nonzero(cum >= level * total)[0]
    if hit.size == 0:
        return Threshold(value=math.inf, level=level)
    return Threshold(value=float(s[order[hit[0]]]), level=level)


def prediction_set(p, tau) -> PredictionSet:
    """Classes whose nonconformity score is strictly below the cutoff.

    ``tau`` may be a float or a :class:`Threshold`.  The comparison is strict,
    so a score exactly equal to the cutoff is excluded.
    """
    q = validate_probabilities(p)
    if q.ndim != 1:
        raise InvalidInput("prediction_set expects a single probability vector")
    cut = tau.value if isinstance(tau, Threshold) else float(tau)
    if math.isnan(cut):
        raise InvalidInput("threshold is NaN")
    classes = np.nonzero((1.0 - q) < cut)[0]
    return PredictionSet(classes=tuple(int(c) for c in classes), threshold=cut)
