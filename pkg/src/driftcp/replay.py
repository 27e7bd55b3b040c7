"""Reading and writing logit dump files.

A logits file is a CSV with header ``id,domain,label,src_0..src_{K-1}`` and,
optionally, ``crt_0..crt_{K-1}`` columns holding the adapted model's logits.
Floats are written with ``repr`` so a round trip through disk is bit exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

__all__ = ["MalformedRow", "MissingCurrentLogits", "LogitsTable", "write_logits", "read_logits"]


class MalformedRow(ValueError):
    """A data row that cannot be parsed; carries the 1-based line number."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


class MissingCurrentLogits(ValueError):
    """Raised when a method needs crt_* columns the file does not have."""


@dataclass(frozen=True)
class LogitsTable:
    ids: np.ndarray
    domains: np.ndarray
    labels: np.ndarray
    src: np.ndarray
    crt: np.ndarray | None

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.src.shape[1])

    @property
    def has_current(self) -> bool:
        return self.crt is not None


def _header(n_classes: int, with_current: bool) -> list:
    cols = ["id", "domain", "label"]
    cols += [f"src_{k}" for k in range(n_classes)]
    if with_current:
        cols += [f"crt_{k}" for k in range(n_classes)]
    return cols


def write_logits(path, ids, domains, labels, src, crt=None) -> None:
    ids = np.asarray(ids, dtype=np.int64)
    domains = np.asarray(domains, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 2:
        raise InvalidInput("src logits must be a 2-D array")
    n, k = src.shape
    if not (ids.shape == domains.shape == labels.shape == (n,)):
        raise InvalidInput("ids, domains and labels must match the logit rows")
    if crt is not None:
        crt = np.asarray(crt, dtype=np.float64)
        if crt.shape != (n, k):
            raise InvalidInput("crt logits must have the same shape as src logits")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_header(k, crt is not None)) + "\n")
        for i in range(n):
            parts = [str(int(ids[i])), str(int(domains[i])), str(int(labels[i]))]
            parts += [repr(float(v)) for v in src[i]]
            if crt is not None:
                parts += [repr(float(v)) for v in crt[i]]
            fh.write(",".join(parts) + "\n")


def _parse_header(cols) -> tuple:
    if cols[:3] != ["id", "domain", "label"]:
        raise InvalidInput("logits header must start with id,domain,label")
    rest = cols[3:]
    k = 0
    while k < len(rest) and rest[k] == f"src_{k}":
        k += 1
    if k == 0:
        raise InvalidInput("logits header has no src_* columns")
    tail = rest[k:]
    if not tail:
        return k, False
    if tail == [f"crt_{j}" for j in range(k)]:
        return k, True
    raise InvalidInput(f"unexpected logits columns after src_{k - 1}: {tail[:3]}")


def read_logits(path) -> LogitsTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InvalidInput(f"{path}: empty logits file")
    k, with_current = _parse_header([c.strip() for c in lines[0].split(",")])
    width = 3 + k * (2 if with_current else 1)
    ids, domains, labels = [], [], []
    src_rows, crt_rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise MalformedRow(lineno, f"expected {width} fields, found {len(parts)}")
        try:
            ids.append(int(parts[0]))
            domains.append(int(parts[1]))
            label = int(parts[2])
            row = [float(v) for v in parts[3:]]
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from exc
        if not (0 <= label < k):
            raise MalformedRow(lineno, f"label {label} outside [0, {k})")
        if not all(np.isfinite(row)):
            raise MalformedRow(lineno, "non-finite logit value")
        labels.append(label)
        src_rows.append(row[:k])
        if with_current:
            crt_rows.append(row[k:])
    if not ids:
        raise InvalidInput(f"{path}: logits file has a header but no rows")
    return LogitsTable(
        ids=np.asarray(ids, dtype=np.int64),
        domains=np.asarray(domains, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        src=np.asarray(src_rows, dtype=np.float64),
        crt=np.asarray(crt_rows, dtype=np.float64) if with_current else None,
    )
