"""Synthetic continual-corruption stream over a Gaussian-blob source task.

The source task places class means on a scaled sphere in feature space and
draws isotropic Gaussian samples around them.  A stream is an ordered list of
corrupted domains; each corruption kind has an integer severity from 0
(identity) to 5, with effect magnitude growing monotonically in severity.
True labels travel next to the features in a separate truth channel that
only the metrics code reads; nothing on the prediction or adaptation path
touches it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidConfig, InvalidInput

__all__ = [
    "CORRUPTION_KINDS",
    "HEADLINE_ORDER",
    "CONSTRUCTIONS",
    "MAX_SEVERITY",
    "SourceTask",
    "CalibrationSet",
    "SourceSplits",
    "Corruption",
    "StreamSchedule",
    "BatchTruth",
    "TestBatch",
    "child_seed",
    "class_means",
    "sample_source",
    "make_source",
    "corrupt",
    "severity_schedule",
    "stream_batches",
]

CORRUPTION_KINDS = ("rotate", "gaussian_noise", "shift_means", "feature_scale", "mean_collapse")
# domain order of the headline severity-5 benchmark
HEADLINE_ORDER = ("rotate", "gaussian_noise", "shift_means", "feature_scale", "mean_collapse")
CONSTRUCTIONS = ("privacy_first", "efficiency_first")
MAX_SEVERITY = 5

# Effect magnitude per severity unit.  Chosen (scripts/severity_curve.py) so
# that severity 5 degrades the source model's accuracy or confidence
# substantially while leaving the task learnable.
ROTATE_ANGLE = 0.22  # radians
NOISE_SIGMA = 0.55
SHIFT_STEP = 1.0
SCALE_STEP = 0.22
COLLAPSE_STEP = 0.09


def child_seed(*keys: int) -> int:
    """Deterministic derived seed for a named subcomponent."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


@dataclass(frozen=True)
class SourceTask:
    """Gaussian-blob classification task with means on a scaled sphere."""

    n_classes: int = 10
    n_features: int = 16
    mean_scale: float = 3.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidInput("need at least two classes")
        if self.n_features < 2:
            raise InvalidInput("need at least two features")
        if self.mean_scale <= 0.0 or self.noise_scale <= 0.0:
            raise InvalidInput("scales must be positive")


def class_means(task: SourceTask) -> np.ndarray:
    """Per-class mean vectors, each of norm ``mean_scale``.

    When the class count does not exceed the feature dimension the
    directions are orthonormalised, which keeps the classes cleanly
    separated; otherwise random unit directions are used.
    """
    rng = np.random.default_rng(child_seed(task.seed, 11))
    g = rng.standard_normal((task.n_features, task.n_classes))
    if task.n_classes <= task.n_features:
        q, _ = np.linalg.qr(g)
        dirs = q[:, : task.n_classes].T
    else:
        dirs = g.T / np.linalg.norm(g.T, axis=1, keepdims=True)
    return task.mean_scale * dirs


def sample_source(task: SourceTask, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw n labelled samples: uniform labels, Gaussian features."""
    means = class_means(task)
    y = rng.integers(0, task.n_classes, size=n)
    X = means[y] + task.noise_scale * rng.standard_normal((n, task.n_features))
    return X, y


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CalibrationSet:
    """Labelled holdout used to compute calibration scores.

    ``source_indices`` records where each row came from: an index into the
    train split under the efficiency-first construction, or -1 for the fresh
    draws of the privacy-first construction.
    """

    features: np.ndarray
    labels: np.ndarray
    construction: str
    source_indices: np.ndarray

    def __post_init__(self):
        if self.construction not in CONSTRUCTIONS:
            raise InvalidConfig(f"construction must be one of {CONSTRUCTIONS}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInput("features/labels length mismatch")
        if self.features.shape[0] == 0:
            raise InvalidInput("calibration set is empty")
        object.__setattr__(self, "features", _read_only(self.features))
        object.__setattr__(self, "labels", _read_only(self.labels))
        object.__setattr__(self, "source_indices", _read_only(self.source_indices))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class SourceSplits:
    train_x: np.ndarray
    train_y: np.ndarray
    calibration: CalibrationSet
    heldout_x: np.ndarray
    heldout_y: np.ndarray


def make_source(
    task: SourceTask,
    n_train: int,
    n_calib: int,
    n_heldout: int,
    construction: str = "privacy_first",
    seed: int | None = None,
) -> SourceSplits:
    """Generate the source-domain splits.

    privacy_first draws calibration samples that were never seen in
    training; efficiency_first reuses a uniform subset of the train split
    (no fresh labelled data needed, at the price of reusing fit data).
    """
    if construction not in CONSTRUCTIONS:
        raise InvalidConfig(f"construction must be one of {CONSTRUCTIONS}")
    if min(n_train, n_calib, n_heldout) < 1:
        raise InvalidConfig("split sizes must be positive")
    rng = np.random.default_rng(child_seed(task.seed if seed is None else seed, 23))
    train_x, train_y = sample_source(task, n_train, rng)
    heldout_x, heldout_y = sample_source(task, n_heldout, rng)
    if construction == "privacy_first":
        calib_x, calib_y = sample_source(task, n_calib, rng)
        idx = np.full(n_calib, -1, dtype=int)
    else:
        if n_calib > n_train:
            raise InvalidConfig(
                f"efficiency_first needs n_calib <= n_train ({n_calib} > {n_train})"
            )
        idx = rng.choice(n_train, size=n_calib, replace=False)
        calib_x, calib_y = train_x[idx].copy(), train_y[idx].copy()
    cal = CalibrationSet(
        features=calib_x, labels=calib_y, construction=construction, source_indices=idx
    )
    return SourceSplits(
        train_x=train_x,
        train_y=train_y,
        calibration=cal,
        heldout_x=heldout_x,
        heldout_y=heldout_y,
    )


@dataclass(frozen=True)
class Corruption:
    """One corruption kind at an integer severity, seeded for determinism.

    ``center`` is only used by ``mean_collapse``; the stream builder fills it
    with the task's global mean (the average class mean).
    """

    kind: str
    severity: int
    seed: int = 0
    center: tuple | None = None

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise InvalidInput(f"unknown corruption kind {self.kind!r}")
        if not (0 <= int(self.severity) <= MAX_SEVERITY):
            raise InvalidInput(f"severity must be an integer in [0, {MAX_SEVERITY}]")


def _rotation_plane(rng, d: int) -> tuple[np.ndarray, np.ndarray]:
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(d)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return u, v


def corrupt(x, c: Corruption) -> np.ndarray:
    """Apply a corruption to a feature row or a batch of rows.

    Severity 0 is the identity for every kind.  The randomness (rotation
    plane, shift direction, noise draws) is a pure function of the
    corruption's seed, so calling twice with the same inputs gives identical
    outputs.  Noise is drawn per row in one pass, so corrupt a whole domain
    at once rather than row by row.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    X = arr[None, :] if single else arr
    if X.ndim != 2:
        raise InvalidInput("features must be 1-D or 2-D")
    sev = int(c.severity)
    if sev == 0:
        out = X.copy()
        return out[0] if single else out
    d = X.shape[1]
    rng = np.random.default_rng(c.seed)
    if c.kind == "rotate":
        u, v = _rotation_plane(rng, d)
        theta = sev * ROTATE_ANGLE
        a = X @ u
        b = X @ v
        out = (
            X
            + np.outer(a * (np.cos(theta) - 1.0) - b * np.sin(theta), u)
            + np.outer(b * (np.cos(theta) - 1.0) + a * np.sin(theta), v)
        )
    elif c.kind == "gaussian_noise":
        out = X + sev * NOISE_SIGMA * rng.standard_normal(X.shape)
    elif c.kind == "shift_means":
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        out = X + sev * SHIFT_STEP * w
    elif c.kind == "feature_scale":
        out = X * (1.0 + sev * SCALE_STEP)
    else:  # mean_collapse
        center = np.zeros(d) if c.center is None else np.asarray(c.center, dtype=float)
        if center.shape != (d,):
            raise InvalidInput("collapse center has the wrong dimension")
        lam = min(1.0, sev * COLLAPSE_STEP)
        out = X + lam * (center - X)
    return out[0] if single else out


@dataclass(frozen=True)
class StreamSchedule:
    """Ordered (corruption, sample count) entries plus batching parameters."""

    entries: tuple
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if len(self.entries) == 0:
            raise InvalidConfig("schedule has no domains")
        for corr, count in self.entries:
            if not isinstance(corr, Corruption):
                raise InvalidConfig("schedule entries must pair a Corruption with a count")
            if count < 1:
                raise InvalidConfig("domain sample counts must be >= 1")

    @property
    def n_domains(self) -> int:
        return len(self.entries)


def severity_schedule(
    task: SourceTask,
    kinds=HEADLINE_ORDER,
    severity: int = MAX_SEVERITY,
    samples_per_domain: int = 4000,
    batch_size: int = 64,
    seed: int = 0,
) -> StreamSchedule:
    """One domain per corruption kind, all at the given severity."""
    center = tuple(class_means(task).mean(axis=0))
    entries = []
    for i, kind in enumerate(kinds):
        entries.append(
            (
                Corruption(
                    kind=kind,
                    severity=severity,
                    seed=child_seed(seed, 31, i),
                    center=center if kind == "mean_collapse" else None,
                ),
                samples_per_domain,
            )
        )
    return StreamSchedule(entries=tuple(entries), batch_size=batch_size, seed=seed)


@dataclass(frozen=True)
class BatchTruth:
    """Ground-truth labels, readable by metrics code only."""

    labels: np.ndarray


@dataclass(frozen=True)
class TestBatch:
    features: np.ndarray
    domain: int
    index: int
    truth: BatchTruth

    @property
    def n(self) -> int:
        return int(self.features.shape[0])


def stream_batches(task: SourceTask, schedule: StreamSchedule):
    """Yield batches domain by domain; batches never straddle domains.

    The last batch of a domain may be smaller than ``batch_size``.  Batch
    indices are global along the stream and domain indices are nondecreasing.
    """
    batch_index = 0
    for domain_idx, (corr, count) in enumerate(schedule.entries):
        rng = np.random.default_rng(child_seed(schedule.seed, 47, domain_idx))
        X, y = sample_source(task, count, rng)
        X = corrupt(X, corr)
        for lo in range(0, count, schedule.batch_size):
            hi = min(lo + schedule.batch_size, count)
            yield TestBatch(
                features=X[lo:hi],
                domain=domain_idx,
                index=batch_index,
                truth=BatchTruth(labels=y[lo:hi]),
            )
            batch_index += 1
