"""Compare the compiled search kernels against the pure-Python fallback.

Runs both implementations on identical inputs (counterfactual candidate-grid
selection shaped like a booster explanation batch, and the optimal-tree
search on a binarized dataset) and prints wall-clock times plus speedups.

Usage: python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

import fcca._kernels._core as core
import fcca._kernels._pyfallback as pyk


def make_mckp_batch(n_instances: int = 300, seed: int = 0):
    """Instances shaped like booster counterfactuals: ~30 feature groups,
    a handful of candidates each, mixed gain signs, positive need."""
    rng = np.random.default_rng(seed)
    batch = []
    for _ in range(n_instances):
        ngroups = int(rng.integers(20, 34))
        costs, gains, changed, group_start, group_len, x0_idx = [], [], [], [], [], []
        for _g in range(ngroups):
            size = int(rng.integers(2, 8))
            group_start.append(len(costs))
            group_len.append(size)
            x0 = int(rng.integers(0, size))
            x0_idx.append(x0)
            for i in range(size):
                if i == x0:
                    costs.append(0.0)
                    gains.append(0.0)
                    changed.append(False)
                else:
                    costs.append(float(rng.uniform(0.05, 1.5)))
                    gains.append(float(rng.normal(0.05, 0.25)))
                    changed.append(True)
        batch.append((costs, gains, changed, group_start, group_len, x0_idx, float(rng.uniform(0.2, 1.2))))
    return batch


def make_tree_instance(n_rows: int = 280, n_cols: int = 26, seed: int = 1):
    rng = np.random.default_rng(seed)
    B = (rng.random((n_rows, n_cols)) < rng.uniform(0.2, 0.8, n_cols)).astype(np.uint8)
    w = rng.normal(size=n_cols)
    y = (B @ w + rng.normal(0, 0.8, n_rows) > np.median(B @ w)).astype(np.int64)
    cells: dict[bytes, list[int]] = {}
    keys: list[bytes] = []
    for key, label in zip(map(bytes, B), y):
        if key not in cells:
            cells[key] = [0, 0]
            keys.append(key)
        cells[key][label] += 1
    bits = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), n_cols).copy()
    c0 = np.array([cells[k][0] for k in keys], dtype=np.int64)
    c1 = np.array([cells[k][1] for k in keys], dtype=np.int64)
    return bits, c0, c1, n_rows


def bench(label: str, fn, repeat: int = 3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    print(f"  {label:<14} {best * 1e3:10.1f} ms")
    return best, result


def main() -> None:
    print("candidate-grid selection (300 instances, ~30 groups each)")
    batch = make_mckp_batch()

    def run_mckp(mod):
        return [mod.mckp_solve(*args) for args in batch]

    t_py, r_py = bench("python", lambda: run_mckp(pyk))
    t_c, r_c = bench("compiled", lambda: run_mckp(core))
    assert r_py == r_c, "implementations disagree"
    print(f"  speedup        {t_py / t_c:10.1f}x\n")

    print("optimal-tree search (280 rows, 26 columns, depth 3)")
    bits, c0, c1, n = make_tree_instance()
    lam = 10.0 / n

    t_py, r_py = bench("python", lambda: pyk.tree_search(bits, c0, c1, n, 3, lam))
    t_c, r_c = bench("compiled", lambda: core.tree_search(bits, c0, c1, n, 3, lam))
    assert r_py == r_c, "implementations disagree"
    print(f"  speedup        {t_py / t_c:10.1f}x")


if __name__ == "__main__":
    main()
