"""Distribution-shift estimation from paired model outputs.

Each sample is represented by one softmax over the concatenated logits of the
frozen source model and the current (possibly adapted) model.  The shift
between a test batch and the calibration set is the aggregate Jensen-Shannon
divergence between the two groups of joint representations, optionally
centered by the within-calibration average so that an in-distribution batch
reads as (approximately) zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import softmax, validate_probabilities
from .errors import EmptyInput, InvalidInput

__all__ = [
    "LN2",
    "ShiftEstimate",
    "joint_representation",
    "js_divergence",
    "calibration_baseline",
    "shift_estimate",
]

LN2 = float(np.log(2.0))

_AGGREGATIONS = ("mean", "sum")


@dataclass(frozen=True)
class ShiftEstimate:
    """Aggregate divergence between a batch and the calibration set.

    ``rho`` is the raw aggregate, ``rho_baseline`` the within-calibration
    mean pairwise divergence (0 when centering is off), and ``rho_centered``
    the clipped difference ``max(0, rho - rho_baseline)``.
    """

    rho: float
    rho_baseline: float
    rho_centered: float
    aggregation: str


def joint_representation(src_logits, crt_logits) -> np.ndarray:
    """Softmax over the concatenation of source and current logits.

    Accepts single vectors or 2-D arrays of row vectors; the two arguments
    must have identical shape.  Note the single normalisation over all 2K
    entries, which preserves the relative scale of the two models' logits.
    """
    a = np.asarray(src_logits, dtype=float)
    b = np.asarray(crt_logits, dtype=float)
    if a.shape != b.shape:
        raise InvalidInput(f"logit shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] < 2:
        raise InvalidInput("need at least two classes per model")
    return softmax(np.concatenate([a, b], axis=-1))


def _neg_entropy(rows: np.ndarray) -> np.ndarray:
    """Row-wise sum of p*ln(p) with the 0*ln(0) = 0 convention."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = rows * np.log(rows)
    return np.where(rows > 0.0, t, 0.0).sum(axis=-1)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats.

    ``0.5 * KL(p || m) + 0.5 * KL(q || m)`` with ``m = (p + q) / 2``.  The
    value lies in [0, ln 2]; it is 0 only for identical distributions and
    reaches ln 2 on disjoint supports.
    """
    pv = validate_probabilities(p)
    qv = validate_probabilities(q)
    if pv.shape != qv.shape or pv.ndim != 1:
        raise InvalidInput("js_divergence expects two equal-length vectors")
    m = 0.5 * (pv + qv)
    val = 0.5 * _neg_entropy(pv) + 0.5 * _neg_entropy(qv) - _neg_entropy(m)
    return float(max(val, 0.0))


def _js_block(P: np.ndarray, Q: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Pairwise JS divergences between rows of P (b, d) and Q (c, d)."""
    sp = _neg_entropy(P)
    sq = _neg_entropy(Q)
    out = np.empty((P.shape[0], Q.shape[0]))
    for lo in range(0, P.shape[0], chunk):
        hi = min(lo + chunk, P.shape[0])
        m = 0.5 * (P[lo:hi, None, :] + Q[None, :, :])
        out[lo:hi] = 0.5 * sp[lo:hi, None] + 0.5 * sq[None, :] - _neg_entropy(m)
    return np.maximum(out, 0.0)


def _as_joint_rows(joints, name: str) -> np.ndarray:
    arr = np.asarray(joints, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D array of joint rows")
    if arr.shape[0] == 0:
        raise EmptyInput(f"{name} is empty")
    return arr


def calibration_baseline(calib_joints) -> float:
    """Mean pairwise JS divergence over distinct calibration pairs.

    A single-row calibration set has no distinct pairs and yields 0.
    """
    C = _as_joint_rows(calib_joints, "calib_joints")
    n = C.shape[0]
    if n < 2:
        return 0.0
    J = _js_block(C, C)
    # diagonal terms are JS(p, p) = 0; drop them from the average anyway
    return float((J.sum() - np.trace(J)) / (n * (n - 1)))


def shift_estimate(
    calib_joints,
    batch_joints,
    aggregation: str = "mean",
    centering: bool = True,
    baseline: float | None = None,
) -> ShiftEstimate:
    """Aggregate pairwise JS divergence between batch and calibration rows.

    Parameters
    ----------
    calib_joints, batch_joints
        2-D arrays of joint representations (rows sum to 1).
    aggregation
        "mean" divides the pairwise total by ``|batch| * |calib|``; "sum"
        leaves the raw total, which grows with both set sizes.
    centering
        Subtract the within-calibration mean pairwise divergence and clip at
        zero, so an exchangeable batch scores approximately 0.
    baseline
        Precomputed value of :func:`calibration_baseline`; pass it when the
        calibration set is reused across batches to avoid recomputation.
    """
    if aggregation not in _AGGREGATIONS:
        raise InvalidInput(f"aggregation must be one of {_AGGREGATIONS}")
    C = _as_joint_rows(calib_joints, "calib_joints")
    B = _as_joint_rows(batch_joints, "batch_joints")
    if C.shape[1] != B.shape[1]:
        raise InvalidInput("calibration and batch joint widths differ")

    J = _js_block(B, C)
    rho = float(J.sum()) if aggregation == "sum" else float(J.mean())

    if centering:
        rho_baseline = calibration_baseline(C) if baseline is None else float(baseline)
    else:
        rho_baseline = 0.0
    rho_centered = max(0.0, rho - rho_baseline)
    return ShiftEstimate(
        rho=rho,
        rho_baseline=rho_baseline,
        rho_centered=rho_centered,
        aggregation=aggregation,
    )
