"""Dataset containers and the two clustering cost functions.

Everything downstream (tree builders, the expansion loop, the benchmark
runner) is measured through `kmeans_cost` and `surrogate_cost`. The cost of
a cell against a fixed center uses squared Euclidean distance throughout;
no other metric is supported.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataMatrix",
    "CenterSet",
    "Assignment",
    "CostReport",
    "squared_distance",
    "kmeans_cost",
    "fixed_center_cost",
    "surrogate_cost",
    "best_center",
    "accuracy",
    "load_csv",
]


def _frozen_array(values, dtype=np.float64, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DataMatrix:
    """n points in d dimensions; the row index is the point id."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(self.points, ndim=2)
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("dataset needs at least one point and one feature")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains NaN or Inf entries")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class CenterSet:
    """k fixed centers plus provenance (seed and producing algorithm)."""

    centers: np.ndarray
    seed: int | None = None
    source: str = "external"

    def __post_init__(self):
        ctr = _frozen_array(self.centers, ndim=2)
        if ctr.shape[0] < 1:
            raise ValueError("need at least one center")
        if not np.all(np.isfinite(ctr)):
            raise ValueError("centers contain NaN or Inf entries")
        if self.source not in ("kmeans++", "external"):
            raise ValueError(f"unknown center source {self.source!r}")
        object.__setattr__(self, "centers", ctr)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class Assignment:
    """Cluster label per point id."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if not np.array_equal(as_int, labels):
                raise ValueError("labels must be integers")
            labels = as_int
        labels = _frozen_array(labels, dtype=np.int64, ndim=1)
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def clusters(self, k: int | None = None) -> list[np.ndarray]:
        """Point ids per cluster; together they partition range(n)."""
        count = int(self.labels.max()) + 1 if self.labels.size else 0
        if k is not None:
            if self.labels.size and count > k:
                raise ValueError(f"label {count - 1} out of range for k={k}")
            count = k
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(count + 1))
        return [order[bounds[j]:bounds[j + 1]] for j in range(count)]


@dataclass(frozen=True)
class CostReport:
    """One row of a benchmark: a tree clustering scored against a reference."""

    kmeans_cost: float
    surrogate_cost: float
    leaf_count: int
    reference_cost: float
    cost_ratio: float
    accuracy: float

    @classmethod
    def build(cls, kmeans_cost, surrogate_cost, leaf_count, reference_cost, accuracy):
        ratio = kmeans_cost / reference_cost if reference_cost > 0 else float("nan")
        return cls(
            kmeans_cost=float(kmeans_cost),
            surrogate_cost=float(surrogate_cost),
            leaf_count=int(leaf_count),
            reference_cost=float(reference_cost),
            cost_ratio=float(ratio),
            accuracy=float(accuracy),
        )


def squared_distance(p, q) -> float:
    """Squared Euclidean distance between two equal-dimension vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    diff = p - q
    return float(np.dot(diff, diff))


def kmeans_cost(X: DataMatrix, a: Assignment) -> float:
    """Sum of squared distances of each point to its cluster mean.

    Empty clusters contribute zero. Labels are taken as opaque cluster ids;
    multiple tree leaves may share one.
    """
    if a.n != X.n:
        raise ValueError(f"assignment covers {a.n} points, dataset has {X.n}")
    pts = X.points
    total = 0.0
    for ids in a.clusters():
        if ids.size == 0:
            continue
        cluster = pts[ids]
        mu = cluster.mean(axis=0)
        total += float(((cluster - mu) ** 2).sum())
    return total


def fixed_center_cost(X: DataMatrix, subset, mu) -> float:
    """Sum of squared distances from a subset of points to one fixed center."""
    ids = np.asarray(subset, dtype=np.int64)
    if ids.size == 0:
        return 0.0
    if ids.min() < 0 or ids.max() >= X.n:
        raise ValueError("point id out of range")
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (X.d,):
        raise ValueError(f"center has dimension {mu.shape}, expected ({X.d},)")
    return float(((X.points[ids] - mu) ** 2).sum())


def best_center(X: DataMatrix, subset, M: CenterSet) -> tuple[int, float]:
    """Index and cost of the cheapest fixed center for a cell (tie: lowest index)."""
    ids = np.asarray(subset, dtype=np.int64)
    if ids.size == 0:
        return 0, 0.0
    if ids.min() < 0 or ids.max() >= X.n:
        raise ValueError("point id out of range")
    pts = X.points[ids]
    costs = np.empty(M.k)
    for j in range(M.k):
        diff = pts - M.centers[j]
        costs[j] = np.einsum("ij,ij->", diff, diff)
    j = int(np.argmin(costs))
    return j, float(costs[j])


def surrogate_cost(X: DataMatrix, leaf_partition: Sequence, M: CenterSet) -> float:
    """Cost of a leaf partition when every cell uses its single best fixed center.

    The partition must cover every point id exactly once; empty cells are
    allowed and contribute zero.
    """
    if M.d != X.d:
        raise ValueError("centers and data disagree on dimension")
    cells = [np.asarray(cell, dtype=np.int64) for cell in leaf_partition]
    covered = np.concatenate([c for c in cells if c.size] or [np.empty(0, np.int64)])
    if covered.size != X.n or not np.array_equal(np.sort(covered), np.arange(X.n)):
        raise ValueError("leaf partition must cover each point id exactly once")
    total = 0.0
    for cell in cells:
        _, cost = best_center(X, cell, M)
        total += cost
    return total


def accuracy(reference: Assignment, induced: Assignment) -> float:
    """Fraction of points whose induced label matches the reference label."""
    if reference.n != induced.n:
        raise ValueError("assignments have different lengths")
    if reference.n == 0:
        return 1.0
    return float(np.mean(reference.labels == induced.labels))


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, columns: Sequence[int] | None = None) -> DataMatrix:
    """Read a comma-separated dataset with an optional header row.

    The header is detected by attempting to parse the first row as floats.
    `columns` selects a subset by original column index. Columns containing
    any non-numeric value are dropped with a warning.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path} is empty")

    header = None
    if not all(_looks_numeric(tok) for tok in rows[0]):
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path} has a header but no data rows")

    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ValueError(f"{path} has ragged rows")

    keep = list(range(width)) if columns is None else list(columns)
    for c in keep:
        if not 0 <= c < width:
            raise ValueError(f"column index {c} out of range for {width} columns")

    numeric, dropped = [], []
    for c in keep:
        if all(_looks_numeric(row[c]) for row in rows):
            numeric.append(c)
        else:
            dropped.append(c)
    if dropped:
        names = [header[c] if header else str(c) for c in dropped]
        warnings.warn(f"dropping non-numeric columns: {', '.join(names)}")
    if not numeric:
        raise ValueError(f"{path} has no numeric columns to load")

    data = np.array([[float(row[c]) for c in numeric] for row in rows])
    return DataMatrix(data)
