"""Compact surrogate decision trees.

Two trainers share one tree type: a greedy Gini CART (works on binarized
columns and, for the un-discretized baseline, on continuous features via
midpoint candidate splits) and a certified-optimal depth-bounded search on
binary columns minimizing misclassification rate plus a per-leaf penalty.

The optimal search runs on distinct binarized patterns (cells) rather than
rows: rows in one cell are indistinguishable to any tree over these columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


@dataclass
class SurrogateTree:
    """Binary decision tree over binarized columns or continuous features.

    Node arrays mirror each other; feature[i] < 0 marks a leaf with label
    value[i]. The split rule is x <= threshold -> left. For binary columns
    the threshold is 0.5, so left is the bit-0 side. `columns` carries the
    (original feature, threshold) provenance of each binary column.
    """

    kind: str  # "binary" | "continuous"
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[int] = field(default_factory=list)
    columns: list[tuple[int, float]] | None = None
    objective: float | None = None
    optimal: bool = False

    def add_leaf(self, label: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(int(label))
        return len(self.feature) - 1

    def add_split(self, axis: int, thr: float) -> int:
        self.feature.append(int(axis))
        self.threshold.append(float(thr))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(-1)
        return len(self.feature) - 1

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for r in range(X.shape[0]):
            i = 0
            while self.feature[i] >= 0:
                i = self.left[i] if X[r, self.feature[i]] <= self.threshold[i] else self.right[i]
            out[r] = self.value[i]
        return out

    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def depth(self) -> int:
        def rec(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0) if self.feature else 0

    def features_used(self) -> set[int]:
        """Distinct original features tested, collapsing column provenance."""
        axes = {f for f in self.feature if f >= 0}
        if self.kind == "binary" and self.columns is not None:
            return {self.columns[c][0] for c in axes}
        return axes


def _gini_counts(c0: int, c1: int) -> float:
    n = c0 + c1
    if n == 0:
        return 0.0
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


def _majority(c0: int, c1: int) -> int:
    return 1 if c1 > c0 else 0


def train_cart(X, y, max_depth: int = 3, min_leaf: int = 1, columns=None, kind: str = "binary") -> SurrogateTree:
    """Greedy Gini tree. Candidate splits are midpoints between consecutive
    distinct values per axis (0.5 for 0/1 columns); ties prefer the lowest
    axis then the lowest threshold; growth stops on purity, zero gain, the
    depth bound, or the min_leaf floor.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training data")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    tree = SurrogateTree(kind=kind, columns=list(columns) if columns is not None else None)

    def best_split(rows: np.ndarray):
        n = rows.size
        c1 = int(y[rows].sum())
        parent = _gini_counts(n - c1, c1)
        best = None  # (impurity drop, axis, threshold)
        for axis in range(X.shape[1]):
            order = rows[np.argsort(X[rows, axis], kind="stable")]
            v = X[order, axis]
            labels = y[order]
            ones = np.cumsum(labels)
            for i in range(n - 1):
                if v[i] == v[i + 1]:
                    continue
                nl = i + 1
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                l1 = int(ones[i])
                r1 = c1 - l1
                w = (
                    nl * _gini_counts(nl - l1, l1) + (n - nl) * _gini_counts(n - nl - r1, r1)
                ) / n
                gain = parent - w
                if gain > 1e-12 and (best is None or gain > best[0] + 1e-12):
                    best = (gain, axis, 0.5 * (v[i] + v[i + 1]))
        return best

    def grow(rows: np.ndarray, depth: int) -> int:
        c1 = int(y[rows].sum())
        c0 = rows.size - c1
        if depth == 0 or c0 == 0 or c1 == 0:
            return tree.add_leaf(_majority(c0, c1))
        found = best_split(rows)
        if found is None:
            return tree.add_leaf(_majority(c0, c1))
        _gain, axis, thr = found
        node = tree.add_split(axis, thr)
        mask = X[rows, axis] <= thr
        tree.left[node] = grow(rows[mask], depth - 1)
        tree.right[node] = grow(rows[~mask], depth - 1)
        return node

    grow(np.arange(X.shape[0]), max_depth)
    return tree


MAX_OPTIMAL_COLUMNS = 512


def train_optimal(
    B,
    y,
    max_depth: int = 3,
    lambda_reg: float = 0.0,
    columns=None,
    max_columns: int = MAX_OPTIMAL_COLUMNS,
    max_memo: int = 4_000_000,
) -> SurrogateTree:
    """Depth-bounded tree with globally minimal misclassification-rate +
    lambda_reg * leaves, via memoized search over (cell subset, depth).

    Ties prefer fewer leaves, then the lexicographically smallest column
    sequence. The column cap bounds the memo key width; past it the subset
    space is too large to certify and we refuse rather than approximate.
    """
    B = np.asarray(B, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int64)
    n = B.shape[0]
    if n == 0:
        raise ValueError("empty training data")
    if B.shape[1] == 0:
        raise ValueError("binarized data has no columns")
    if B.shape[1] > max_columns:
        raise ValueError(
            f"{B.shape[1]} binary columns exceed the certified-search cap of {max_columns}; "
            "raise the quantile Q to select fewer thresholds"
        )
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")

    cells: dict[bytes, list[int]] = {}
    keys: list[bytes] = []
    for key, label in zip(map(bytes, B), y):
        if key not in cells:
            cells[key] = [0, 0]
            keys.append(key)
        cells[key][label] += 1
    bits = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), B.shape[1]).copy()
    count0 = np.array([cells[k][0] for k in keys], dtype=np.int64)
    count1 = np.array([cells[k][1] for k in keys], dtype=np.int64)

    err, leaves, nodes = _kernels.tree_search(bits, count0, count1, n, max_depth, lambda_reg, max_memo)

    tree = SurrogateTree(kind="binary", columns=list(columns) if columns is not None else None)

    def build(pos: int) -> tuple[int, int]:
        axis, label = nodes[pos]
        if axis < 0:
            return tree.add_leaf(label), pos + 1
        node = tree.add_split(axis, 0.5)
        left, pos = build(pos + 1)
        right, pos = build(pos)
        tree.left[node] = left
        tree.right[node] = right
        return node, pos

    build(0)
    tree.objective = err / n + lambda_reg * leaves
    tree.optimal = True
    return tree


def objective_of(tree: SurrogateTree, X, y, lambda_reg: float) -> float:
    """Misclassification rate plus the per-leaf penalty, for dominance
    comparisons between trainers."""
    y = np.asarray(y, dtype=np.int64)
    mis = int((tree.predict(X) != y).sum())
    return mis / y.shape[0] + lambda_reg * tree.n_leaves()


def evaluate(tree: SurrogateTree, X, y) -> dict:
    y = np.asarray(y, dtype=np.int64)
    acc = float((tree.predict(X) == y).mean())
    return {
        "accuracy": acc,
        "n_leaves": tree.n_leaves(),
        "n_distinct_features_used": len(tree.features_used()),
        "depth": tree.depth(),
    }


def _split_description(tree: SurrogateTree, node: int, feature_names=None) -> str:
    axis = tree.feature[node]
    if tree.kind == "binary" and tree.columns is not None:
        j, t = tree.columns[axis]
        name = feature_names[j] if feature_names is not None else f"f{j}"
        return f"{name} > {t:.10g}"
    name = feature_names[axis] if feature_names is not None else f"f{axis}"
    return f"{name} > {tree.threshold[node]:.10g}"


def tree_to_dict(tree: SurrogateTree, feature_names=None) -> dict:
    def rec(i: int):
        if tree.feature[i] < 0:
            return {"leaf": int(tree.value[i])}
        return {
            "split": _split_description(tree, i, feature_names),
            "axis": int(tree.feature[i]),
            "no": rec(tree.left[i]),
            "yes": rec(tree.right[i]),
        }

    return {
        "kind": tree.kind,
        "depth": tree.depth(),
        "n_leaves": tree.n_leaves(),
        "objective": tree.objective,
        "optimal": tree.optimal,
        "root": rec(0),
    }


def tree_to_json(tree: SurrogateTree, path, feature_names=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_dict(tree, feature_names), fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_text(tree: SurrogateTree, feature_names=None) -> str:
    lines: list[str] = []

    def rec(i: int, pad: str) -> None:
        if tree.feature[i] < 0:
            lines.append(f"{pad}label {tree.value[i]}")
            return
        desc = _split_description(tree, i, feature_names)
        lines.append(f"{pad}if {desc}:")
        rec(tree.right[i], pad + "  ")
        lines.append(f"{pad}else:")
        rec(tree.left[i], pad + "  ")

    rec(0, "")
    return "\n".join(lines)
