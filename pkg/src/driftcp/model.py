"""Small softmax classifier with hand-derived gradients and a teacher pair.

The network is either linear (features -> classes) or has one tanh hidden
layer.  Gradients are analytic; no autodiff framework is involved, which
keeps runs bit-reproducible and makes the finite-difference check in the
test suite meaningful.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass

import numpy as np

from .core import softmax
from .errors import EmptyInput, InvalidInput, NumericalError

__all__ = [
    "LOG_FLOOR",
    "SNAPSHOT_MAGIC",
    "ModelParams",
    "ModelPair",
    "init_params",
    "make_pair",
    "forward",
    "predict_probs",
    "weighted_ce_loss_and_grad",
    "supervised_ce_loss_and_grad",
    "sgd_step",
    "ema_update",
    "fit_supervised",
    "accuracy",
    "save_params",
    "load_params",
]

LOG_FLOOR = 1e-12
SNAPSHOT_MAGIC = b"CUIM"


@dataclass
class ModelParams:
    """Weight/bias pairs per layer plus a version counter for cache keys."""

    layers: list  # [(W, b)] or [(W1, b1), (W2, b2)]
    version: int = 0

    @property
    def n_features(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def hidden(self) -> int:
        return 0 if len(self.layers) == 1 else self.layers[0][0].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[(W.copy(), b.copy()) for W, b in self.layers],
            version=self.version,
        )


@dataclass
class ModelPair:
    """Student, EMA teacher, and the frozen pretrained source model."""

    student: ModelParams
    teacher: ModelParams
    source: ModelParams
    ema_momentum: float = 0.999


def init_params(n_features: int, n_classes: int, hidden: int = 0, rng=None, scale: float = 0.01) -> ModelParams:
    if n_features < 1 or n_classes < 2:
        raise InvalidInput("need n_features >= 1 and n_classes >= 2")
    rng = np.random.default_rng(rng)
    if hidden > 0:
        layers = [
            (scale * rng.standard_normal((n_features, hidden)), np.zeros(hidden)),
            (scale * rng.standard_normal((hidden, n_classes)), np.zeros(n_classes)),
        ]
    else:
        layers = [(scale * rng.standard_normal((n_features, n_classes)), np.zeros(n_classes))]
    return ModelParams(layers=layers)


def _freeze(params: ModelParams) -> ModelParams:
    for W, b in params.layers:
        W.flags.writeable = False
        b.flags.writeable = False
    return params


def make_pair(pretrained: ModelParams, ema_momentum: float = 0.999) -> ModelPair:
    """Clone a pretrained model into (student, teacher, frozen source).

    Version counters restart at zero: they are cache keys for the pair's
    lifecycle, not a record of pretraining steps.
    """
    if not (0.0 <= ema_momentum < 1.0):
        raise InvalidInput("ema_momentum must lie in [0, 1)")

    def fresh():
        c = pretrained.copy()
        c.version = 0
        return c

    return ModelPair(
        student=fresh(),
        teacher=fresh(),
        source=_freeze(fresh()),
        ema_momentum=float(ema_momentum),
    )


def _forward_cached(params: ModelParams, X: np.ndarray):
    """Logits plus per-layer activations needed for backprop."""
    h = X
    acts = [X]
    for i, (W, b) in enumerate(params.layers):
        z = h @ W + b
        if i < len(params.layers) - 1:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    return h, acts


def forward(params: ModelParams, X) -> np.ndarray:
    """Logits for a feature row or a batch of rows."""
    x = np.asarray(X, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise InvalidInput(f"features must be (n, {params.n_features})")
    z, _ = _forward_cached(params, x)
    if not np.all(np.isfinite(z)):
        raise NumericalError("forward pass produced non-finite logits")
    return z[0] if single else z


def predict_probs(params: ModelParams, X) -> np.ndarray:
    return softmax(forward(params, X))


def _backprop(params: ModelParams, acts, dZ: np.ndarray):
    """Gradients of each layer given dLoss/dlogits, in layer order."""
    grads = [None] * len(params.layers)
    delta = dZ
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        a = acts[i]
        grads[i] = (a.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (1.0 - acts[i] ** 2)
    return grads


def _ce_from_targets(params: ModelParams, X: np.ndarray, targets: np.ndarray, gammas: np.ndarray):
    """Weighted cross-entropy against fixed target distributions.

    Loss: -(1/B) sum_i gamma_i sum_y targets[i, y] * log(max(p[i, y], floor)).
    The gradient is exact for the floored loss; entries at the floor carry no
    gradient, which only matters for probabilities below 1e-12.
    """
    z, acts = _forward_cached(params, X)
    if not np.all(np.isfinite(z)):
        raise NumericalError("forward pass produced non-finite logits")
    p = softmax(z)
    n = X.shape[0]
    mask = p > LOG_FLOOR
    logp = np.log(np.maximum(p, LOG_FLOOR))
    loss = float(-(gammas * (targets * logp).sum(axis=1)).sum() / n)
    active = targets * mask
    dZ = (gammas / n)[:, None] * (p * active.sum(axis=1, keepdims=True) - active)
    return loss, _backprop(params, acts, dZ)


def _check_batch(X, n_rows_name="batch") -> np.ndarray:
    x = np.asarray(X, dtype=float)
    if x.ndim != 2:
        raise InvalidInput(f"{n_rows_name} must be 2-D")
    if x.shape[0] == 0:
        raise EmptyInput(f"{n_rows_name} is empty")
    return x


def weighted_ce_loss_and_grad(pair: ModelPair, X, gammas):
    """Mean-teacher loss on a batch and its gradient w.r.t. student params.

    The teacher's probabilities are the targets and receive no gradient.
    Returns ``(loss, grads)`` with one ``(dW, db)`` tuple per student layer.
    """
    x = _check_batch(X)
    g = np.asarray(gammas, dtype=float).ravel()
    if g.shape[0] != x.shape[0]:
        raise InvalidInput("gammas must have one entry per batch row")
    if np.any(~np.isfinite(g)) or np.any(g < 0.0):
        raise InvalidInput("gammas must be finite and nonnegative")
    targets = predict_probs(pair.teacher, x)
    return _ce_from_targets(pair.student, x, targets, g)


def supervised_ce_loss_and_grad(params: ModelParams, X, labels):
    """Plain cross-entropy against integer labels (used for pretraining)."""
    x = _check_batch(X)
    y = np.asarray(labels, dtype=int).ravel()
    if y.shape[0] != x.shape[0]:
        raise InvalidInput("labels must have one entry per batch row")
    if np.any(y < 0) or np.any(y >= params.n_classes):
        raise InvalidInput("labels outside class range")
    targets = np.zeros((x.shape[0], params.n_classes))
    targets[np.arange(x.shape[0]), y] = 1.0
    return _ce_from_targets(params, x, targets, np.ones(x.shape[0]))


def sgd_step(params: ModelParams, grads, lr: float) -> ModelParams:
    """One in-place gradient step; bumps the version counter."""
    if lr <= 0.0:
        raise InvalidInput("lr must be positive")
    if len(grads) != len(params.layers):
        raise InvalidInput("gradient/layer count mismatch")
    new_layers = []
    for (W, b), (dW, db) in zip(params.layers, grads):
        if W.shape != dW.shape or b.shape != db.shape:
            raise InvalidInput("gradient shape mismatch")
        new_layers.append((W - lr * dW, b - lr * db))
    params.layers = new_layers
    params.version += 1
    return params


def ema_update(pair: ModelPair) -> ModelParams:
    """Teacher <- m * teacher + (1 - m) * student; bumps teacher version."""
    m = pair.ema_momentum
    pair.teacher.layers = [
        (m * Wt + (1.0 - m) * Ws, m * bt + (1.0 - m) * bs)
        for (Wt, bt), (Ws, bs) in zip(pair.teacher.layers, pair.student.layers)
    ]
    pair.teacher.version += 1
    return pair.teacher


def fit_supervised(params: ModelParams, X, labels, epochs: int = 30, batch_size: int = 128, lr: float = 0.1, rng=None) -> ModelParams:
    """Minibatch SGD on labelled data (pretraining helper)."""
    x = _check_batch(X, "train set")
    y = np.asarray(labels, dtype=int).ravel()
    rng = np.random.default_rng(rng)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            _, grads = supervised_ce_loss_and_grad(params, x[idx], y[idx])
            sgd_step(params, grads, lr)
    return params


def accuracy(params: ModelParams, X, labels) -> float:
    """Fraction of argmax predictions matching the labels."""
    preds = predict_probs(params, X).argmax(axis=1)
    return float(np.mean(preds == np.asarray(labels, dtype=int).ravel()))


# ---------------------------------------------------------------------------
# snapshots: magic, dims header, little-endian float64 row-major payload


def save_params(params: ModelParams, path) -> None:
    d = params.n_features
    h = params.hidden
    k = params.n_classes
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", d, h, k))
        for W, b in params.layers:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != SNAPSHOT_MAGIC:
        raise InvalidInput(f"not a model snapshot: bad magic {blob[:4]!r}")
    d, h, k = struct.unpack("<III", blob[4:16])
    shapes = [(d, h), (h,), (h, k), (k,)] if h > 0 else [(d, k), (k,)]
    need = 16 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != need:
        raise InvalidInput(f"snapshot has {len(blob)} bytes, expected {need}")
    offset = 16
    flats = []
    for s in shapes:
        cnt = int(np.prod(s))
        arr = np.frombuffer(blob, dtype="<f8", count=cnt, offset=offset).reshape(s).copy()
        flats.append(arr)
        offset += 8 * cnt
    if h > 0:
        layers = [(flats[0], flats[1]), (flats[2], flats[3])]
    else:
        layers = [(flats[0], flats[1])]
    return ModelParams(layers=layers)
