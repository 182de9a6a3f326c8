"""Tabular dataset ingestion, min-max scaling, per-feature resolution and folds.

All downstream stages assume features scaled to [0, 1] and binary labels in
{0, 1}. Constant columns carry no decision boundary and break the resolution
computation, so they are removed at load time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for malformed input data (missing file, bad cells, bad labels)."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with binary labels.

    X is row-major, shape (n, m). After ``scale_minmax`` every value lies in
    [0, 1] and ``scaler`` holds the original per-feature (min, max) pairs.
    ``eps`` is the per-feature resolution: the smallest gap between two
    consecutive distinct values, computed on scaled data.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    eps: np.ndarray | None = None
    scaler: np.ndarray | None = None  # shape (m, 2): [min, max] in original units
    dropped: tuple[str, ...] = ()
    label_values: tuple = (0, 1)  # original label values, ascending

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset sharing scaler/eps metadata."""
        return replace(self, X=self.X[idx], y=self.y[idx])


@dataclass(frozen=True)
class FoldPlan:
    """Seeded cross-validation split.

    ``assignments`` has one entry per dataset row: a fold index in [0, k) for
    rows in the CV pool, -1 for rows held out as the external test set.
    """

    k: int
    assignments: np.ndarray
    external_test: np.ndarray
    seed: int

    def pool_idx(self) -> np.ndarray:
        return np.flatnonzero(self.assignments >= 0)

    def train_idx(self, fold: int) -> np.ndarray:
        return np.flatnonzero((self.assignments >= 0) & (self.assignments != fold))

    def test_idx(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Load a CSV (UTF-8, header row, comma delimiter) into an unscaled Dataset.

    The label column defaults to the last column. Labels must take exactly two
    distinct values; they are mapped to {0, 1} in ascending order. Constant
    feature columns are dropped (recorded in ``Dataset.dropped``). Missing or
    non-numeric cells are hard errors reported with row and column.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc
    if frame.shape[1] < 2:
        raise DataError("dataset needs at least one feature column and a label column")

    if label_column is None:
        label_column = frame.columns[-1]
    if label_column not in frame.columns:
        raise DataError(f"label column {label_column!r} not in header")

    feats = frame.drop(columns=[label_column])
    for col in feats.columns:
        numeric = pd.to_numeric(feats[col], errors="coerce")
        bad = numeric.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"non-numeric or missing value at row {row}, column {col!r}")
        feats[col] = numeric

    labels_raw = frame[label_column]
    values = sorted(pd.unique(labels_raw))
    if len(values) != 2:
        raise DataError(
            f"label column {label_column!r} must have exactly 2 distinct values, got {len(values)}"
        )
    y = (labels_raw == values[1]).to_numpy(dtype=np.int64)

    X = feats.to_numpy(dtype=np.float64)
    keep = [j for j in range(X.shape[1]) if X[:, j].min() < X[:, j].max()]
    dropped = tuple(feats.columns[j] for j in range(X.shape[1]) if j not in keep)
    for name in dropped:
        logger.warning("dropped constant feature column: %s", name)
    if not keep:
        raise DataError("no non-constant feature columns left after filtering")

    return Dataset(
        X=np.ascontiguousarray(X[:, keep]),
        y=y,
        feature_names=tuple(feats.columns[j] for j in keep),
        dropped=dropped,
        label_values=tuple(values),
    )


def scale_minmax(ds: Dataset) -> Dataset:
    """Scale each feature linearly to [0, 1] and remember the original range."""
    lo = ds.X.min(axis=0)
    hi = ds.X.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        raise DataError("cannot scale constant feature (should have been dropped)")
    X = (ds.X - lo) / span
    scaler = np.column_stack([lo, hi])
    return replace(ds, X=X, scaler=scaler)


def inverse_transform(ds: Dataset, X01: np.ndarray) -> np.ndarray:
    """Map scaled values back to original units using the stored scaler."""
    if ds.scaler is None:
        raise ValueError("dataset has no scaler")
    lo = ds.scaler[:, 0]
    hi = ds.scaler[:, 1]
    return lo + X01 * (hi - lo)


def to_original_units(scaler: np.ndarray, feature: int, value: float) -> float:
    lo, hi = scaler[feature]
    return float(lo + value * (hi - lo))


def compute_feature_eps(ds: Dataset, rows: np.ndarray | None = None) -> np.ndarray:
    """Per-feature resolution: the minimum gap between consecutive distinct values.

    When ``rows`` is given, only those rows are considered (e.g. the training
    part of a fold). Features constant on the restricted rows get the gap
    computed on the full dataset as a fallback, so the value stays positive.
    """
    X = ds.X if rows is None else ds.X[rows]
    eps = np.empty(ds.m)
    for j in range(ds.m):
        vals = np.unique(X[:, j])
        if vals.size < 2:
            vals = np.unique(ds.X[:, j])
        eps[j] = np.diff(vals).min()
    return eps


def with_eps(ds: Dataset, rows: np.ndarray | None = None) -> Dataset:
    return replace(ds, eps=compute_feature_eps(ds, rows))


def make_folds(ds: Dataset, k: int, cap: int | None = None, seed: int = 0) -> FoldPlan:
    """Seeded random k-fold partition, optionally capping the CV pool size.

    If the dataset exceeds ``cap`` rows, a uniform random subset of ``cap``
    rows becomes the CV pool and the remainder the external test set.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if cap is not None and cap < 1:
        raise ValueError("cap must be positive")
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.n)
    if cap is not None and ds.n > cap:
        pool, external = order[:cap], np.sort(order[cap:])
    else:
        pool, external = order, np.array([], dtype=np.int64)
    if k > pool.size:
        raise ValueError(f"k={k} exceeds pool size {pool.size}")
    assignments = np.full(ds.n, -1, dtype=np.int64)
    for fold, chunk in enumerate(np.array_split(pool, k)):
        assignments[chunk] = fold
    return FoldPlan(k=k, assignments=assignments, external_test=external, seed=seed)
