"""Target models: gradient-boosted trees, random forests, linear classifiers.

All trees are axis-aligned with the routing rule `x[feature] <= threshold goes
left`. Raw-score conventions:

  GB:     raw(x) = init_raw + lr * sum of leaf values;   label = 1 iff raw >= 0
  RF:     raw(x) = avg leaf weight of class 1 - avg leaf weight of class 0
  linear: raw(x) = w . x + b

Probabilities: GB and linear squash raw through a sigmoid (probability of
class 1); RF reports the averaged leaf weight of the predicted class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MODEL_SCHEMA = "fcca-model-v1"


@dataclass
class Tree:
    """Flat-array binary tree. feature[i] == -1 marks a leaf.

    value[i] is the leaf payload: a scalar (GB regression value) or a
    [w0, w1] class-weight pair (RF). gain[i] records the impurity decrease of
    the split at node i (0 at leaves), used for reference-ensemble thresholds.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def add_leaf(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def add_split(self, feature: int, threshold: float, gain: float) -> int:
        self.feature.append(feature)
        self.threshold.append(float(threshold))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(None)
        self.gain.append(float(gain))
        return len(self.feature) - 1

    def leaf_index(self, x) -> int:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return i

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)

        def assign(node: int, rows: np.ndarray) -> None:
            if self.feature[node] < 0:
                out[rows] = node
                return
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            assign(self.left[node], rows[go_left])
            assign(self.right[node], rows[~go_left])

        assign(0, np.arange(X.shape[0]))
        return out

    def depth(self) -> int:
        def rec(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(rec(self.left[node]), rec(self.right[node]))

        return rec(0)

    def splits(self):
        """(feature, threshold, gain) triples of all internal nodes."""
        return [
            (self.feature[i], self.threshold[i], self.gain[i])
            for i in range(len(self.feature))
            if self.feature[i] >= 0
        ]


@dataclass
class Ensemble:
    kind: str  # "gb" | "rf"
    trees: list[Tree]
    lr: float = 1.0
    init_raw: float = 0.0
    n_features: int = 0
    feature_names: tuple[str, ...] | None = None
    scaler: list | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def max_depth(self) -> int:
        return max((t.depth() for t in self.trees), default=0)


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    kind: str = "linear"
    n_features: int = 0
    feature_names: tuple[str, ...] | None = None
    scaler: list | None = None


class Prediction(NamedTuple):
    label: int
    probability: float
    raw: float


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _check_dim(model, m: int) -> None:
    if model.n_features and m != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {m}")


def raw_score(model, x) -> float:
    """Model raw score of a single point (see module docstring)."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, x.shape[-1])
    if isinstance(model, LinearModel):
        return float(np.dot(model.w, x) + model.b)
    if model.kind == "gb":
        s = model.init_raw
        for t in model.trees:
            s += model.lr * t.value[t.leaf_index(x)]
        return float(s)
    w0 = w1 = 0.0
    for t in model.trees:
        v = t.value[t.leaf_index(x)]
        w0 += v[0]
        w1 += v[1]
    n = len(model.trees)
    return (w1 - w0) / n


def predict(model, x) -> Prediction:
    """(label, probability, raw). Raw score ties (exactly 0) go to label 1."""
    if isinstance(model, LinearModel) or model.kind == "gb":
        raw = raw_score(model, x)
        return Prediction(1 if raw >= 0 else 0, _sigmoid(raw), raw)
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, x.shape[-1])
    w0 = w1 = 0.0
    for t in model.trees:
        v = t.value[t.leaf_index(x)]
        w0 += v[0]
        w1 += v[1]
    n = len(model.trees)
    w0 /= n
    w1 /= n
    raw = w1 - w0
    label = 1 if raw >= 0 else 0
    return Prediction(label, w1 if label == 1 else w0, raw)


def predict_batch(model, X: np.ndarray):
    """Vectorized predict: (labels, probabilities, raws) arrays."""
    X = np.asarray(X, dtype=np.float64)
    _check_dim(model, X.shape[1])
    n = X.shape[0]
    if isinstance(model, LinearModel):
        raw = X @ model.w + model.b
        labels = (raw >= 0).astype(np.int64)
        prob = 1.0 / (1.0 + np.exp(-np.clip(raw, -500, 500)))
        return labels, prob, raw
    if model.kind == "gb":
        raw = np.full(n, model.init_raw)
        for t in model.trees:
            raw += model.lr * np.asarray([t.value[i] for i in t.leaf_indices(X)], dtype=np.float64)
        labels = (raw >= 0).astype(np.int64)
        prob = 1.0 / (1.0 + np.exp(-np.clip(raw, -500, 500)))
        return labels, prob, raw
    w0 = np.zeros(n)
    w1 = np.zeros(n)
    for t in model.trees:
        leaves = t.leaf_indices(X)
        w0 += np.asarray([t.value[i][0] for i in leaves])
        w1 += np.asarray([t.value[i][1] for i in leaves])
    w0 /= model.n_trees
    w1 /= model.n_trees
    raw = w1 - w0
    labels = (raw >= 0).astype(np.int64)
    prob = np.where(labels == 1, w1, w0)
    return labels, prob, raw


def accuracy(model, X: np.ndarray, y: np.ndarray) -> float:
    labels, _, _ = predict_batch(model, X)
    return float(np.mean(labels == y))


def _best_split_sse(Xj: np.ndarray, r: np.ndarray):
    """Best squared-error split on one feature: (gain, threshold) or None.

    gain is the SSE decrease (unnormalized); threshold is the midpoint of the
    consecutive distinct values around the best cut.
    """
    order = np.argsort(Xj, kind="stable")
    v = Xj[order]
    t = r[order]
    n = v.size
    cuts = np.flatnonzero(v[:-1] < v[1:])
    if cuts.size == 0:
        return None
    csum = np.cumsum(t)
    total = csum[-1]
    nl = cuts + 1.0
    sl = csum[cuts]
    gain = sl * sl / nl + (total - sl) * (total - sl) / (n - nl) - total * total / n
    k = int(np.argmax(gain))
    thr = 0.5 * (v[cuts[k]] + v[cuts[k] + 1])
    return float(gain[k]), float(thr)


def _best_split_gini(Xj: np.ndarray, y: np.ndarray):
    """Best Gini split on one feature: (impurity decrease, threshold) or None."""
    order = np.argsort(Xj, kind="stable")
    v = Xj[order]
    t = y[order]
    n = v.size
    cuts = np.flatnonzero(v[:-1] < v[1:])
    if cuts.size == 0:
        return None
    c1 = np.cumsum(t)
    n1 = c1[-1]
    nl = cuts + 1.0
    c1l = c1[cuts].astype(np.float64)
    c0l = nl - c1l
    nr = n - nl
    c1r = n1 - c1l
    c0r = nr - c1r
    # node impurity weighted by size: n_node - (c0^2 + c1^2)/n_node
    parent = n - (float(n - n1) ** 2 + float(n1) ** 2) / n
    child = (nl - (c0l * c0l + c1l * c1l) / nl) + (nr - (c0r * c0r + c1r * c1r) / nr)
    gain = parent - child
    k = int(np.argmax(gain))
    thr = 0.5 * (v[cuts[k]] + v[cuts[k] + 1])
    return float(gain[k]), float(thr)


def _grow_tree(X, target, depth, leaf_value, split_fn, rows, tree, features):
    """Recursive exhaustive-split builder shared by GB and RF trees."""
    best = None
    if depth > 0 and rows.size >= 2:
        for j in features:
            res = split_fn(X[rows, j], target[rows])
            if res is not None and res[0] > 1e-12 and (best is None or res[0] > best[0]):
                best = (res[0], j, res[1])
    if best is None:
        return tree.add_leaf(leaf_value(rows))
    gain, j, thr = best
    node = tree.add_split(j, thr, gain)
    go_left = X[rows, j] <= thr
    tree.left[node] = _grow_tree(X, target, depth - 1, leaf_value, split_fn, rows[go_left], tree, features)
    tree.right[node] = _grow_tree(X, target, depth - 1, leaf_value, split_fn, rows[~go_left], tree, features)
    return node


def train_gb(ds, n_estimators: int = 100, depth: int = 1, lr: float = 0.1, seed: int = 0) -> Ensemble:
    """Stagewise logistic-loss boosting with exhaustive squared-error splits.

    Each stage fits a depth-bounded regression tree to the residual y - p and
    sets leaf values by one Newton step sum(y - p) / sum(p (1 - p)).
    Deterministic; `seed` is accepted for interface symmetry.
    """
    X, y = np.asarray(ds.X, dtype=np.float64), np.asarray(ds.y)
    n, m = X.shape
    n1 = int(y.sum())
    if n1 == 0 or n1 == n:
        raise ValueError("training labels contain a single class")
    f0 = math.log(n1 / (n - n1))
    raw = np.full(n, f0)
    trees = []
    features = range(m)
    for _ in range(n_estimators):
        p = 1.0 / (1.0 + np.exp(-raw))
        residual = y - p
        weight = p * (1.0 - p)

        def leaf_value(rows):
            den = float(weight[rows].sum())
            return float(residual[rows].sum() / den) if den > 1e-12 else 0.0

        tree = Tree()
        _grow_tree(X, residual, depth, leaf_value, _best_split_sse, np.arange(n), tree, features)
        trees.append(tree)
        raw += lr * np.asarray([tree.value[i] for i in tree.leaf_indices(X)])
    return Ensemble(
        kind="gb",
        trees=trees,
        lr=lr,
        init_raw=f0,
        n_features=m,
        feature_names=getattr(ds, "feature_names", None),
        scaler=None if getattr(ds, "scaler", None) is None else np.asarray(ds.scaler).tolist(),
    )


def train_rf(ds, n_trees: int = 100, max_depth: int = 4, seed: int = 0, max_features: int | None = None) -> Ensemble:
    """Bootstrap-aggregated exhaustive Gini trees with class-frequency leaves."""
    X, y = np.asarray(ds.X, dtype=np.float64), np.asarray(ds.y)
    n, m = X.shape
    n1 = int(y.sum())
    if n1 == 0 or n1 == n:
        raise ValueError("training labels contain a single class")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows_boot = rng.integers(0, n, n)
        Xb, yb = X[rows_boot], y[rows_boot]

        def leaf_value(rows):
            k = rows.size
            c1 = int(yb[rows].sum())
            return [(k - c1) / k, c1 / k]

        if max_features is not None and max_features < m:
            features = np.sort(rng.choice(m, size=max_features, replace=False))
        else:
            features = range(m)
        tree = Tree()
        _grow_tree(Xb, yb.astype(np.float64), max_depth, leaf_value, _best_split_gini, np.arange(n), tree, features)
        trees.append(tree)
    return Ensemble(
        kind="rf",
        trees=trees,
        n_features=m,
        feature_names=getattr(ds, "feature_names", None),
        scaler=None if getattr(ds, "scaler", None) is None else np.asarray(ds.scaler).tolist(),
    )


def train_linear(ds, epochs: int = 400, reg: float = 1e-3, step: float = 0.5, seed: int = 0) -> LinearModel:
    """Full-batch subgradient descent on L2-regularized hinge loss.

    Deterministic (no sampling); good enough as a linear target model.
    """
    X, y = np.asarray(ds.X, dtype=np.float64), np.asarray(ds.y)
    n, m = X.shape
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    sy = 2.0 * y - 1.0
    w = np.zeros(m)
    b = 0.0
    for t in range(epochs):
        margin = sy * (X @ w + b)
        viol = margin < 1.0
        grad_w = reg * w - (sy[viol, None] * X[viol]).sum(axis=0) / n
        grad_b = -float(sy[viol].sum()) / n
        eta = step / math.sqrt(t + 1.0)
        w -= eta * grad_w
        b -= eta * grad_b
    return LinearModel(
        w=w,
        b=b,
        n_features=m,
        feature_names=getattr(ds, "feature_names", None),
        scaler=None if getattr(ds, "scaler", None) is None else np.asarray(ds.scaler).tolist(),
    )


def split_thresholds(model: Ensemble) -> dict[int, list[tuple[float, float]]]:
    """Distinct (feature, threshold) pairs with summed impurity decrease.

    Returns {feature: [(threshold, total_gain), ...]} with thresholds sorted
    ascending per feature.
    """
    agg: dict[int, dict[float, float]] = {}
    for tree in model.trees:
        for j, c, g in tree.splits():
            agg.setdefault(j, {})
            agg[j][c] = agg[j].get(c, 0.0) + g
    return {j: sorted(pairs.items()) for j, pairs in sorted(agg.items())}


def _tree_to_dict(t: Tree) -> dict:
    return {
        "feature": t.feature,
        "threshold": t.threshold,
        "left": t.left,
        "right": t.right,
        "value": t.value,
        "gain": t.gain,
    }


def _tree_from_dict(d: dict) -> Tree:
    return Tree(
        feature=list(d["feature"]),
        threshold=list(d["threshold"]),
        left=list(d["left"]),
        right=list(d["right"]),
        value=list(d["value"]),
        gain=list(d["gain"]),
    )


def save_model(model, path) -> None:
    """JSON serialization; round-trips predictions bit-exactly."""
    if isinstance(model, LinearModel):
        doc = {
            "version": MODEL_SCHEMA,
            "kind": "linear",
            "w": np.asarray(model.w).tolist(),
            "b": float(model.b),
            "n_features": model.n_features,
            "feature_names": list(model.feature_names) if model.feature_names else None,
            "scaler": model.scaler,
        }
    else:
        doc = {
            "version": MODEL_SCHEMA,
            "kind": model.kind,
            "lr": model.lr,
            "init_raw": model.init_raw,
            "trees": [_tree_to_dict(t) for t in model.trees],
            "n_features": model.n_features,
            "feature_names": list(model.feature_names) if model.feature_names else None,
            "scaler": model.scaler,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema: {doc.get('version')!r}")
    names = tuple(doc["feature_names"]) if doc.get("feature_names") else None
    if doc["kind"] == "linear":
        return LinearModel(
            w=np.asarray(doc["w"], dtype=np.float64),
            b=float(doc["b"]),
            n_features=int(doc["n_features"]),
            feature_names=names,
            scaler=doc.get("scaler"),
        )
    return Ensemble(
        kind=doc["kind"],
        trees=[_tree_from_dict(t) for t in doc["trees"]],
        lr=float(doc.get("lr", 1.0)),
        init_raw=float(doc.get("init_raw", 0.0)),
        n_features=int(doc["n_features"]),
        feature_names=names,
        scaler=doc.get("scaler"),
    )
