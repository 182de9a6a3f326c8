"""Shared builders and independent oracles for the test suite.

Everything here is deliberately written against the public routing/score
conventions only (x <= threshold goes left, GB raw = init + lr * sum, ...),
never by calling back into the solver under test, so these helpers can serve
as ground truth.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from fcca.counterfactual import CEProblem, ensemble_margin
from fcca.dataset import Dataset, scale_minmax, with_eps
from fcca.models import Ensemble, LinearModel, Tree, predict


# ---------------------------------------------------------------------------
# synthetic datasets


def make_blobs(n: int = 160, m: int = 6, seed: int = 0, noise: float = 0.04) -> Dataset:
    """Two gaussian clusters squeezed into [0,1]^m with a few flipped labels."""
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.vstack(
        [
            rng.normal(0.30, 0.12, size=(half, m)),
            rng.normal(0.70, 0.12, size=(n - half, m)),
        ]
    )
    y = np.concatenate([np.zeros(half, np.int64), np.ones(n - half, np.int64)])
    y[rng.random(n) < noise] ^= 1
    order = rng.permutation(n)
    ds = Dataset(
        X=X[order],
        y=y[order],
        feature_names=tuple(f"f{j:02d}" for j in range(m)),
    )
    return with_eps(scale_minmax(ds))


def write_blobs_csv(path, n: int = 160, m: int = 6, seed: int = 0, noise: float = 0.04):
    """Raw-unit blob CSV (per-column scale and offset) with a label column."""
    rng = np.random.default_rng(seed)
    ds = make_blobs(n=n, m=m, seed=seed, noise=noise)
    scale = rng.uniform(0.5, 20.0, size=m)
    offset = rng.uniform(-5.0, 5.0, size=m)
    frame = pd.DataFrame(ds.X * scale + offset, columns=list(ds.feature_names))
    frame["label"] = ds.y
    frame.to_csv(path, index=False)
    return path


# ---------------------------------------------------------------------------
# random hand-built targets


def random_stump_gb(rng: np.random.Generator, m: int, n_trees: int = 8) -> Ensemble:
    trees = []
    for _ in range(n_trees):
        t = Tree()
        root = t.add_split(int(rng.integers(m)), float(rng.uniform(0.08, 0.92)), 1.0)
        t.left[root] = t.add_leaf(float(rng.normal(0.0, 1.0)))
        t.right[root] = t.add_leaf(float(rng.normal(0.0, 1.0)))
        trees.append(t)
    return Ensemble(
        kind="gb",
        trees=trees,
        lr=0.25,
        init_raw=float(rng.normal(0.0, 0.4)),
        n_features=m,
    )


def _random_tree(rng: np.random.Generator, m: int, depth: int, leaf_fn) -> Tree:
    t = Tree()

    def grow(level: int) -> int:
        if level == 0 or rng.random() < 0.2:
            return t.add_leaf(leaf_fn())
        node = t.add_split(int(rng.integers(m)), float(rng.uniform(0.08, 0.92)), 1.0)
        t.left[node] = grow(level - 1)
        t.right[node] = grow(level - 1)
        return node

    grow(depth)
    return t


def random_deep_gb(rng: np.random.Generator, m: int, n_trees: int = 4, depth: int = 2) -> Ensemble:
    trees = [
        _random_tree(rng, m, depth, lambda: float(rng.normal(0.0, 1.0)))
        for _ in range(n_trees)
    ]
    return Ensemble(
        kind="gb",
        trees=trees,
        lr=0.3,
        init_raw=float(rng.normal(0.0, 0.3)),
        n_features=m,
    )


def random_rf(rng: np.random.Generator, m: int, n_trees: int = 3, depth: int = 2) -> Ensemble:
    def leaf():
        w1 = float(rng.random())
        return [1.0 - w1, w1]

    trees = [_random_tree(rng, m, depth, leaf) for _ in range(n_trees)]
    return Ensemble(kind="rf", trees=trees, n_features=m)


def random_ce_problem(
    model,
    rng: np.random.Generator,
    *,
    lambda0=(0.05, 0.5),
    lambda1=(0.3, 1.2),
    lambda2=(0.0, 0.0),
    eps_range=(0.004, 0.02),
    margin: float = 1e-4,
    n_immutable: int = 0,
) -> CEProblem:
    m = model.n_features
    x0 = rng.random(m)
    y0 = predict(model, x0).label
    immutable = frozenset(
        int(j) for j in rng.choice(m, size=n_immutable, replace=False)
    )
    return CEProblem(
        x0=x0,
        y0=y0,
        y_ce=1 - y0,
        lambda0=float(rng.uniform(*lambda0)),
        lambda1=float(rng.uniform(*lambda1)),
        lambda2=float(rng.uniform(*lambda2)),
        eps=rng.uniform(*eps_range, size=m),
        margin=margin,
        immutable=immutable,
    )


# ---------------------------------------------------------------------------
# validity checking


def assert_valid_ce(model, prob: CEProblem, sol) -> None:
    """Box membership, immutability, label flip, margin, and cost recompute."""
    assert sol.is_optimal
    x = sol.x_ce
    assert np.all(x >= prob.box[:, 0] - 1e-12)
    assert np.all(x <= prob.box[:, 1] + 1e-12)
    for j in prob.immutable:
        assert x[j] == prob.x0[j]
    assert predict(model, x).label == prob.y_ce
    if isinstance(model, LinearModel):
        sy = 1.0 if prob.y_ce == 1 else -1.0
        assert sy * (float(model.w @ x) + model.b) >= 1.0 - 1e-9
    else:
        assert ensemble_margin(model, prob.y_ce, x) >= prob.margin - 1e-9
        assert sol.margin_achieved >= prob.margin - 1e-9
    moved = np.flatnonzero(x != prob.x0)
    d = np.abs(x - prob.x0)
    recomputed = float(
        prob.lambda0 * len(moved)
        + prob.lambda1 * d.sum()
        + prob.lambda2 * (d * d).sum()
    )
    assert abs(sol.cost - recomputed) <= 1e-9 * max(1.0, recomputed)
    assert sol.changed == tuple(int(j) for j in np.flatnonzero(d > prob.eps))


# ---------------------------------------------------------------------------
# exhaustive surrogate-tree oracle (small depth / column counts only)


def enumerate_tree_objective(B, y, max_depth: int, lambda_reg: float) -> float:
    """Minimum of misclassification rate + lambda_reg * leaves over every
    axis-aligned tree of depth <= max_depth, by brute recursion.

    The objective is additive over leaves, so minimizing children
    independently is exact.
    """
    B = np.asarray(B, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int64)
    n, k = B.shape
    lam_n = lambda_reg * n

    def miscl(rows) -> int:
        c1 = int(y[rows].sum())
        return min(len(rows) - c1, c1)

    def best(rows, d: int) -> float:
        leaf = miscl(rows) + lam_n
        if d == 0 or len(rows) <= 1:
            return leaf
        out = leaf
        for c in range(k):
            right = B[rows, c] == 1
            v = best(rows[~right], d - 1) + best(rows[right], d - 1)
            if v < out:
                out = v
        return out

    return best(np.arange(n), max_depth) / n
