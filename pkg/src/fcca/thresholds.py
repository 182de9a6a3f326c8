"""Decision-boundary thresholds harvested from counterfactual couples.

Each optimal counterfactual (x0, x_ce) contributes one threshold per feature
it significantly changed: the counterfactual coordinate nudged back toward
the original point by the feature resolution, so the cut separates the two
points. Thresholds are pooled over all couples; a threshold's multiplicity
counts how often it recurs, and the quantile filter keeps the recurrent ones.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

GRID_DECIMALS = 10


@dataclass
class ThresholdBag:
    """Thresholds per feature with multiplicities.

    counts[j] maps threshold value -> multiplicity. n_couples is the number
    of optimal counterfactuals that contributed.
    """

    m: int
    counts: dict[int, Counter] = field(default_factory=dict)
    n_couples: int = 0

    def add(self, j: int, t: float) -> None:
        self.counts.setdefault(j, Counter())[t] += 1

    def merge(self, other: "ThresholdBag") -> None:
        if other.m != self.m:
            raise ValueError("feature count mismatch")
        for j, c in other.counts.items():
            self.counts.setdefault(j, Counter()).update(c)
        self.n_couples += other.n_couples

    def multiplicities(self) -> np.ndarray:
        """All multiplicities, one entry per distinct (feature, threshold)."""
        out = []
        for j in sorted(self.counts):
            out.extend(self.counts[j][t] for t in sorted(self.counts[j]))
        return np.asarray(out, dtype=np.float64)

    def n_distinct(self) -> int:
        return sum(len(c) for c in self.counts.values())


def extract_thresholds(x0s, solutions, eps, box=None) -> ThresholdBag:
    """Pool thresholds from counterfactual couples.

    For each changed feature j the cut sits at x_ce_j plus eps_j toward x0_j,
    rounded to the 1e-10 grid. Cuts outside the open box interval are
    discarded: a cut at an exact bound separates nothing.
    """
    x0s = np.asarray(x0s, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    m = x0s.shape[1] if x0s.ndim == 2 else len(eps)
    if box is None:
        box = np.column_stack([np.zeros(m), np.ones(m)])
    bag = ThresholdBag(m=m)
    for x0, sol in zip(x0s, solutions):
        if not sol.is_optimal:
            continue
        bag.n_couples += 1
        for j in sol.changed:
            direction = 1.0 if x0[j] > sol.x_ce[j] else -1.0
            t = sol.x_ce[j] + direction * eps[j]
            t = float(np.clip(t, box[j, 0], box[j, 1]))
            t = round(t, GRID_DECIMALS)
            if t <= box[j, 0] or t >= box[j, 1]:
                continue
            bag.add(j, t)
    return bag


def quantile_level(bag: ThresholdBag, q: float) -> float:
    """F_Q: the q-quantile (linear interpolation) of the multiplicities,
    each distinct threshold counting as one sample."""
    mult = bag.multiplicities()
    if mult.size == 0:
        raise ValueError("no thresholds extracted")
    return float(np.quantile(mult, q))


def select_quantile(bag: ThresholdBag, q: float) -> dict[int, list[float]]:
    """tau^Q: thresholds whose multiplicity reaches F_Q, per feature, sorted.

    Raising q can only shrink the selection (F_Q is nondecreasing in q).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    level = quantile_level(bag, q)
    out: dict[int, list[float]] = {}
    for j in sorted(bag.counts):
        kept = sorted(t for t, c in bag.counts[j].items() if c >= level)
        if kept:
            out[j] = kept
    return out


def n_selected(tau: dict[int, list[float]]) -> int:
    return sum(len(v) for v in tau.values())


def heatmap_export(bag: ThresholdBag, path, bin_width: float = 0.05) -> None:
    """CSV heatmap: one row per feature, multiplicity mass per value bin."""
    edges = np.arange(0.0, 1.0 + bin_width / 2, bin_width)
    n_bins = len(edges) - 1
    with open(path, "w", encoding="utf-8") as fh:
        header = ["feature"] + [f"[{edges[i]:.2f},{edges[i + 1]:.2f})" for i in range(n_bins)]
        fh.write(",".join(header) + "\n")
        for j in range(bag.m):
            row = np.zeros(n_bins)
            for t, c in bag.counts.get(j, {}).items():
                b = min(int(t / bin_width), n_bins - 1)
                row[b] += c
            fh.write(",".join([str(j)] + [repr(float(v)) for v in row]) + "\n")


def thresholds_to_json(bag: ThresholdBag, tau: dict[int, list[float]], feature_names, path, scaler=None) -> None:
    """Selected thresholds as JSON: feature name -> list of
    {t_scaled, t_original_units, multiplicity}, original units via the
    per-feature (lo, hi) min-max scaler when given."""
    payload: dict[str, list[dict]] = {}
    for j in sorted(tau):
        entries = []
        for t in tau[j]:
            lo, hi = (float(scaler[j][0]), float(scaler[j][1])) if scaler is not None else (0.0, 1.0)
            entries.append(
                {
                    "t_scaled": float(t),
                    "t_original_units": lo + float(t) * (hi - lo),
                    "multiplicity": int(bag.counts[j][t]),
                }
            )
        payload[str(feature_names[j])] = entries
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def overlap_fraction(tau: dict[int, list[float]], reference: dict[int, list[float]], tol: float = 1e-9) -> float:
    """Fraction of tau's thresholds within tol of some reference threshold
    on the same feature (1.0 when tau is empty)."""
    total = hits = 0
    for j, ts in tau.items():
        ref = np.asarray(reference.get(j, []), dtype=np.float64)
        for t in ts:
            total += 1
            if ref.size and np.min(np.abs(ref - t)) <= tol:
                hits += 1
    return 1.0 if total == 0 else hits / total
