"""Supervised binarization against selected thresholds, plus the two
tunability metrics: compression (how many rows collapse onto shared binary
patterns) and inconsistency (label disagreement within a pattern, which
lower-bounds the error of any classifier reading only the binary view).

Metrics are computed over occupied patterns only; empty cells contribute
nothing, so hashing the n rows is exact however large the full cell product
would be.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BinDataset:
    B: np.ndarray  # (n, K) uint8, column order: feature asc, threshold asc
    y: np.ndarray
    columns: list[tuple[int, float]]  # (feature, threshold) per column
    dropped: tuple[int, ...] = ()  # features with no selected threshold

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class DiscretizationMetrics:
    eta: float  # compression rate, 1 - distinct/n
    delta: float  # inconsistency rate, sum of per-cell minority counts / n
    distinct_cells: int
    cells: dict[bytes, tuple[int, int]] = field(repr=False, default_factory=dict)


def binarize(X, y, tau: dict[int, list[float]]) -> BinDataset:
    """One 0/1 column per selected threshold: 0 when x_j <= t, else 1.

    Columns are ordered by feature index, then threshold value. Features
    without thresholds produce no columns and are reported as dropped.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    columns = [(j, float(t)) for j in sorted(tau) if tau[j] for t in sorted(tau[j])]
    if not columns:
        raise ValueError("no thresholds selected")
    kept = {j for j, _t in columns}
    dropped = tuple(j for j in range(X.shape[1]) if j not in kept)
    B = np.empty((X.shape[0], len(columns)), dtype=np.uint8)
    for k, (j, t) in enumerate(columns):
        B[:, k] = (X[:, j] > t).astype(np.uint8)
    return BinDataset(B=B, y=y, columns=columns, dropped=dropped)


def _cell_table(B: np.ndarray, y: np.ndarray) -> dict[bytes, list[int]]:
    """Group rows by identical binary pattern -> [count0, count1]."""
    cells: dict[bytes, list[int]] = {}
    for key, label in zip(map(bytes, B), y):
        cell = cells.setdefault(key, [0, 0])
        cell[label] += 1
    return cells


def metrics(ds: BinDataset) -> DiscretizationMetrics:
    cells = _cell_table(ds.B, ds.y)
    mis = sum(min(c0, c1) for c0, c1 in cells.values())
    return DiscretizationMetrics(
        eta=1.0 - len(cells) / ds.n,
        delta=mis / ds.n,
        distinct_cells=len(cells),
        cells={k: (v[0], v[1]) for k, v in cells.items()},
    )


def compression_rate(ds: BinDataset) -> float:
    """eta = 1 - (#distinct patterns) / n."""
    return metrics(ds).eta


def inconsistency_rate(ds: BinDataset) -> float:
    """delta = (1/n) * sum over patterns of min(#label0, #label1).

    The irreducible training error of any predictor that sees only the
    binarized features.
    """
    return metrics(ds).delta


def majority_accuracy(ds: BinDataset) -> float:
    """Best achievable accuracy on the binary view: per-pattern majority
    votes, i.e. 1 - delta computed from the same counts."""
    cells = _cell_table(ds.B, ds.y)
    mis = sum(min(c0, c1) for c0, c1 in cells.values())
    return 1.0 - mis / ds.n


def raw_metrics(X, y) -> tuple[float, float]:
    """(eta, delta) of the continuous data itself: rows are patterns.

    Baseline for judging how much structure binarization adds; all-distinct
    rows give (0, 0).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    cells: dict[bytes, list[int]] = {}
    for row, label in zip(X, y):
        cell = cells.setdefault(row.tobytes(), [0, 0])
        cell[label] += 1
    n = X.shape[0]
    eta = 1.0 - len(cells) / n
    delta = sum(min(c0, c1) for c0, c1 in cells.values()) / n
    return eta, delta


def consistency_ceiling_check(ds: BinDataset, accuracy: float, tol: float = 1e-12) -> bool:
    """True when `accuracy` respects the binary-view ceiling 1 - delta."""
    return accuracy <= majority_accuracy(ds) + tol


def export_binarized_csv(ds: BinDataset, path, feature_names=None) -> None:
    """CSV with provenance headers `feature:threshold` plus the label."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        names = []
        for j, t in ds.columns:
            base = feature_names[j] if feature_names is not None else f"f{j}"
            names.append(f"{base}:{t:.10g}")
        w.writerow(names + ["label"])
        for row, label in zip(ds.B, ds.y):
            w.writerow([int(v) for v in row] + [int(label)])


def metrics_to_json(ds: BinDataset, path) -> None:
    met = metrics(ds)
    payload = {
        "eta": met.eta,
        "delta": met.delta,
        "distinct_cells": met.distinct_cells,
        "n_columns": int(ds.k),
        "dropped_features": [int(j) for j in ds.dropped],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
