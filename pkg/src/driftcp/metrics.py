"""Streaming evaluation counters: point error, coverage, set size.

All quantities are computed on the predictions a batch received before any
model update, per domain and overall.  ``kappa`` is the signed coverage gap
``(1 - alpha) - COV``; positive values mean undercoverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidInput

__all__ = ["BucketReport", "MetricsReport", "MetricsAccumulator"]


@dataclass
class _Bucket:
    n: int = 0
    errors: int = 0
    covered: int = 0
    size_total: int = 0

    def add(self, errors: int, covered: int, size_total: int, n: int) -> None:
        self.n += n
        self.errors += errors
        self.covered += covered
        self.size_total += size_total


@dataclass(frozen=True)
class BucketReport:
    n: int
    err: float
    cov: float
    ine: float
    kappa: float


@dataclass(frozen=True)
class MetricsReport:
    alpha: float
    overall: BucketReport
    per_domain: dict


class MetricsAccumulator:
    """Accumulates ERR/COV/INE per domain and overall."""

    def __init__(self, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise InvalidInput("alpha must lie in (0, 1)")
        self.alpha = float(alpha)
        self._overall = _Bucket()
        self._domains: dict[int, _Bucket] = {}

    def update(self, points, sets, labels, domain: int) -> None:
        """Record one batch of outcomes for the given domain index."""
        pts = np.asarray(points, dtype=int).ravel()
        y = np.asarray(labels, dtype=int).ravel()
        if not (len(pts) == len(sets) == len(y)):
            raise InvalidInput("points, sets and labels must align")
        if len(y) == 0:
            return
        errors = int(np.sum(pts != y))
        covered = sum(1 for s, label in zip(sets, y) if int(label) in s)
        size_total = sum(len(s) for s in sets)
        for bucket in (self._overall, self._domains.setdefault(int(domain), _Bucket())):
            bucket.add(errors, covered, size_total, len(y))

    def _report(self, b: _Bucket) -> BucketReport:
        cov = b.covered / b.n
        return BucketReport(
            n=b.n,
            err=b.errors / b.n,
            cov=cov,
            ine=b.size_total / b.n,
            kappa=(1.0 - self.alpha) - cov,
        )

    def finalize(self) -> MetricsReport:
        """Summarise everything seen so far; unseen domains are absent."""
        if self._overall.n == 0:
            raise EmptyInput("no samples were recorded")
        return MetricsReport(
            alpha=self.alpha,
            overall=self._report(self._overall),
            per_domain={d: self._report(b) for d, b in sorted(self._domains.items())},
        )
