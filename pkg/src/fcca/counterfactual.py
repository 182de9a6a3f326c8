"""Certified-optimal counterfactual explanations.

For tree ensembles the continuous search collapses onto a finite candidate
grid per feature: staying put, or clearing one of the feature's split
thresholds by the feature resolution eps_j on either side. Within one routing
cell the cost is monotone in the distance from x0, so some optimum always
lies on the grid. Depth-1 ensembles decompose per feature and are solved by
the exact multiple-choice kernel; deeper ensembles use a branch-and-bound
over features with per-tree reachable-leaf bounds. Linear models get a
support-set branch-and-bound with a closed-form continuous inner solve.

Sign convention: the class constraint is expressed as a single margin
m(x) >= margin where m = s * raw, s = +1 when the target class is 1 and -1
otherwise (RF raw being the averaged class-1 minus class-0 leaf weight).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .models import Ensemble, LinearModel, predict, split_thresholds


@dataclass
class CEProblem:
    x0: np.ndarray
    y0: int
    y_ce: int
    lambda0: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 0.0
    eps: np.ndarray | None = None
    margin: float = 1e-4
    box: np.ndarray | None = None  # (m, 2) per-feature bounds, default [0,1]
    immutable: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        m = self.x0.shape[0]
        if self.eps is None:
            raise ValueError("CEProblem needs per-feature eps")
        self.eps = np.asarray(self.eps, dtype=np.float64)
        if self.box is None:
            self.box = np.column_stack([np.zeros(m), np.ones(m)])
        else:
            self.box = np.asarray(self.box, dtype=np.float64)
        if self.y_ce == self.y0:
            raise ValueError("target label must differ from the original label")
        if min(self.lambda0, self.lambda1, self.lambda2) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if np.any(self.x0 < self.box[:, 0]) or np.any(self.x0 > self.box[:, 1]):
            raise ValueError("x0 must lie inside the box")
        self.immutable = frozenset(self.immutable)


@dataclass
class CESolution:
    status: str  # "optimal" | "infeasible"
    x_ce: np.ndarray | None = None
    cost: float | None = None
    changed: tuple[int, ...] = ()
    margin_achieved: float | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


INFEASIBLE = CESolution(status="infeasible")


@dataclass
class CandidateGrid:
    """Per-feature admissible values with costs and significance flags."""

    values: list[np.ndarray]
    costs: list[np.ndarray]
    changed: list[np.ndarray]
    x0_index: list[int]


def _candidate_cost(prob: CEProblem, j: int, v: float) -> float:
    if v == prob.x0[j]:
        return 0.0
    d = abs(v - prob.x0[j])
    return prob.lambda0 + prob.lambda1 * d + prob.lambda2 * d * d


def build_candidates(model: Ensemble, prob: CEProblem) -> CandidateGrid:
    """Candidate values per feature: {x0_j} plus every split threshold on j
    shifted by +-eps_j, clipped to the box (out-of-box candidates dropped).

    Immutable features keep only x0_j. The x0_j candidate always has cost 0.
    """
    splits = split_thresholds(model)
    m = prob.x0.shape[0]
    values, costs, changed, x0_index = [], [], [], []
    for j in range(m):
        vals = {float(prob.x0[j])}
        if j not in prob.immutable:
            for c, _gain in splits.get(j, ()):
                for v in (c - prob.eps[j], c + prob.eps[j]):
                    if prob.box[j, 0] <= v <= prob.box[j, 1]:
                        vals.add(float(v))
        arr = np.array(sorted(vals))
        values.append(arr)
        costs.append(np.array([_candidate_cost(prob, j, v) for v in arr]))
        changed.append(np.abs(arr - prob.x0[j]) > prob.eps[j])
        x0_index.append(int(np.flatnonzero(arr == prob.x0[j])[0]))
    return CandidateGrid(values, costs, changed, x0_index)


def margin_sign(y_ce: int) -> float:
    return 1.0 if y_ce == 1 else -1.0


def ensemble_margin(model: Ensemble, y_ce: int, x) -> float:
    """Signed class margin m(x) = s * raw(x); the CE constraint is m >= eps."""
    from .models import raw_score

    return margin_sign(y_ce) * raw_score(model, x)


def _leaf_sigma(model: Ensemble, tree, leaf: int, s: float) -> float:
    """Per-leaf contribution to the signed margin."""
    v = tree.value[leaf]
    if model.kind == "gb":
        return s * model.lr * v
    return s * (v[1] - v[0]) / model.n_trees


def _stump_decomposition(model: Ensemble, prob: CEProblem):
    """Split a depth<=1 ensemble margin into const + per-feature pieces.

    Returns (const, stumps) where stumps maps feature -> list of
    (threshold, sigma_left, sigma_right). const includes the GB init term and
    all leaf-only trees.
    """
    s = margin_sign(prob.y_ce)
    const = s * model.init_raw if model.kind == "gb" else 0.0
    stumps: dict[int, list[tuple[float, float, float]]] = {}
    for tree in model.trees:
        if tree.feature[0] < 0:
            const += _leaf_sigma(model, tree, 0, s)
            continue
        j, c = tree.feature[0], tree.threshold[0]
        stumps.setdefault(j, []).append(
            (c, _leaf_sigma(model, tree, tree.left[0], s), _leaf_sigma(model, tree, tree.right[0], s))
        )
    return const, stumps


def _stump_contrib(stumps_j, v: float) -> float:
    return sum(sl if v <= c else sr for c, sl, sr in stumps_j)


def _assemble(prob: CEProblem, grid: CandidateGrid, chosen: dict[int, int]) -> np.ndarray:
    x = prob.x0.copy()
    for j, idx in chosen.items():
        x[j] = grid.values[j][idx]
    return x


def _finish(model, prob: CEProblem, x_ce: np.ndarray, cost: float) -> CESolution:
    changed = tuple(int(j) for j in np.flatnonzero(np.abs(x_ce - prob.x0) > prob.eps))
    if isinstance(model, LinearModel):
        margin = margin_sign(prob.y_ce) * float(np.dot(model.w, x_ce) + model.b)
        ok = margin >= 1.0 - 1e-9
    else:
        margin = ensemble_margin(model, prob.y_ce, x_ce)
        ok = margin >= prob.margin - 1e-9
    pred = predict(model, x_ce)
    if pred.label != prob.y_ce or not ok:
        raise AssertionError("solver returned an invalid counterfactual")
    return CESolution(status="optimal", x_ce=x_ce, cost=float(cost), changed=changed, margin_achieved=margin)


def _solve_stumps(model: Ensemble, prob: CEProblem, grid: CandidateGrid, tie_eps: float) -> CESolution:
    const, stumps = _stump_decomposition(model, prob)
    m = prob.x0.shape[0]
    m0 = const + sum(_stump_contrib(stumps[j], prob.x0[j]) for j in stumps)
    need = prob.margin - m0

    group_feats = [j for j in range(m) if grid.values[j].size > 1]
    costs, gains, changed, group_start, group_len, x0_idx = [], [], [], [], [], []
    for j in group_feats:
        group_start.append(len(costs))
        group_len.append(grid.values[j].size)
        x0_idx.append(grid.x0_index[j])
        base = _stump_contrib(stumps.get(j, ()), prob.x0[j])
        for v, c, ch in zip(grid.values[j], grid.costs[j], grid.changed[j]):
            costs.append(float(c))
            gains.append(_stump_contrib(stumps.get(j, ()), float(v)) - base)
            changed.append(bool(ch))

    feasible, cost, idx, _nch, _gain = _kernels.mckp_solve(
        costs, gains, changed, group_start, group_len, x0_idx, need, tie_eps
    )
    if not feasible:
        return INFEASIBLE
    x_ce = _assemble(prob, grid, dict(zip(group_feats, idx)))
    return _finish(model, prob, x_ce, cost)


def _max_reachable(tree, sigma, fixed: dict[int, float]) -> float:
    """Max leaf sigma consistent with the fixed coordinates (others free)."""

    def rec(node: int) -> float:
        if tree.feature[node] < 0:
            return sigma[node]
        j = tree.feature[node]
        if j in fixed:
            nxt = tree.left[node] if fixed[j] <= tree.threshold[node] else tree.right[node]
            return rec(nxt)
        return max(rec(tree.left[node]), rec(tree.right[node]))

    return rec(0)


def _solve_deep(model: Ensemble, prob: CEProblem, grid: CandidateGrid, tie_eps: float) -> CESolution:
    """Exact search for ensembles deeper than stumps.

    Branch-and-bound over features; the feasibility bound routes each tree to
    its best reachable leaf given the partial assignment. Intended for small
    ensembles; the stump path covers the large-scale configuration.
    """
    s = margin_sign(prob.y_ce)
    const = s * model.init_raw if model.kind == "gb" else 0.0
    sigmas = []
    for tree in model.trees:
        sigmas.append([_leaf_sigma(model, tree, i, s) if tree.feature[i] < 0 else 0.0 for i in range(len(tree.feature))])

    def margin_of(fixed: dict[int, float]) -> float:
        total = const
        point = {j: fixed.get(j, float(prob.x0[j])) for j in range(prob.x0.shape[0])}
        for tree, sig in zip(model.trees, sigmas):
            i = 0
            while tree.feature[i] >= 0:
                i = tree.left[i] if point[tree.feature[i]] <= tree.threshold[i] else tree.right[i]
            total += sig[i]
        return total

    def upper(fixed: dict[int, float]) -> float:
        return const + sum(_max_reachable(t, sig, fixed) for t, sig in zip(model.trees, sigmas))

    n_splits = {}
    for tree in model.trees:
        for j, _c, _g in tree.splits():
            n_splits[j] = n_splits.get(j, 0) + 1
    feats = [j for j in range(prob.x0.shape[0]) if grid.values[j].size > 1]
    feats.sort(key=lambda j: (-n_splits.get(j, 0), j))

    orders = []
    for j in feats:
        items = sorted(
            zip(grid.costs[j].tolist(), range(grid.values[j].size)),
            key=lambda t: (t[0], t[1]),
        )
        orders.append(items)

    best = {"cost": float("inf"), "tb": None, "idx": None}
    fixed: dict[int, float] = {}
    chosen: dict[int, int] = {}

    def record(cost: float) -> None:
        idx = [chosen.get(j, grid.x0_index[j]) for j in feats]
        nch = sum(1 for k, j in enumerate(feats) if grid.changed[j][idx[k]])
        if cost < best["cost"] - tie_eps:
            ok = True
        elif cost <= best["cost"] + tie_eps:
            ok = best["tb"] is None or (nch, idx) < best["tb"]
        else:
            ok = False
        if ok:
            best["cost"] = cost
            best["tb"] = (nch, list(idx))
            best["idx"] = dict(zip(feats, idx))

    def dfs(k: int, cost: float) -> None:
        if cost > best["cost"] + tie_eps:
            return
        if upper(fixed) < prob.margin:
            return
        if margin_of(fixed) >= prob.margin:
            record(cost)
        if k == len(feats):
            return
        j = feats[k]
        for c_i, i_i in orders[k]:
            chosen[j] = i_i
            fixed[j] = float(grid.values[j][i_i])
            dfs(k + 1, cost + c_i)
            del chosen[j]
            del fixed[j]

    dfs(0, 0.0)
    if best["idx"] is None:
        return INFEASIBLE
    x_ce = _assemble(prob, grid, best["idx"])
    return _finish(model, prob, x_ce, float(best["cost"]))


def solve_ensemble_ce(model: Ensemble, prob: CEProblem, tie_eps: float = 1e-12) -> CESolution:
    """Minimum-cost counterfactual for a tree ensemble, or infeasible."""
    pred = predict(model, prob.x0)
    if pred.label != prob.y0:
        raise ValueError("y0 does not match the model's prediction at x0")
    grid = build_candidates(model, prob)
    if model.max_depth() <= 1:
        return _solve_stumps(model, prob, grid, tie_eps)
    return _solve_deep(model, prob, grid, tie_eps)


def _water_fill(a, dmax, lam1, lam2, need):
    """min sum(lam1 d + lam2 d^2) s.t. sum(a d) >= need, 0 <= d <= dmax.

    Features enter in decreasing gain rate; with lam2 > 0 the KKT multiplier
    is found by scanning entry/saturation breakpoints. Returns (cost, d) or
    None when even d = dmax everywhere cannot reach `need`.
    """
    k = len(a)
    if sum(ai * di for ai, di in zip(a, dmax)) < need:
        return None
    d = [0.0] * k
    if lam2 <= 0.0:
        rem = need
        for i in sorted(range(k), key=lambda i: (-a[i], i)):
            if rem <= 0:
                break
            take = min(dmax[i], rem / a[i])
            d[i] = take
            rem -= a[i] * take
        return lam1 * sum(d), d
    mus = sorted(
        {lam1 / ai for ai in a} | {(lam1 + 2.0 * lam2 * di) / ai for ai, di in zip(a, dmax)}
    )

    def fill(mu):
        return [min(max((mu * ai - lam1) / (2.0 * lam2), 0.0), di) for ai, di in zip(a, dmax)]

    def gain(ds):
        return sum(ai * di for ai, di in zip(a, ds))

    prev = 0.0
    for mu in mus:
        ds = fill(mu)
        g = gain(ds)
        if g >= need:
            # interpolate within (prev, mu): active set is constant there
            lo, hi = prev, mu
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if gain(fill(mid)) >= need:
                    hi = mid
                else:
                    lo = mid
            ds = fill(hi)
            d = ds
            break
        prev = mu
    else:
        d = fill(mus[-1])
    return sum(lam1 * di + lam2 * di * di for di in d), d


def solve_linear_ce(model: LinearModel, prob: CEProblem, tie_eps: float = 1e-12) -> CESolution:
    """Minimum-cost counterfactual for a linear model: y(w.x + b) >= 1 with
    the target class encoded as -1/+1. Exact via branch-and-bound over the
    set of features allowed to move, with a closed-form continuous solve.
    """
    pred = predict(model, prob.x0)
    if pred.label != prob.y0:
        raise ValueError("y0 does not match the model's prediction at x0")
    sy = margin_sign(prob.y_ce)
    raw0 = float(np.dot(model.w, prob.x0) + model.b)
    need = 1.0 - sy * raw0

    m = prob.x0.shape[0]
    items = []  # (feature, gain rate a_j, max distance D_j, direction)
    for j in range(m):
        if j in prob.immutable or model.w[j] == 0.0:
            continue
        direction = 1.0 if sy * model.w[j] > 0 else -1.0
        dmax = (prob.box[j, 1] - prob.x0[j]) if direction > 0 else (prob.x0[j] - prob.box[j, 0])
        if dmax <= 0:
            continue
        items.append((j, abs(float(model.w[j])), float(dmax), direction))
    items.sort(key=lambda it: (-it[1], it[0]))

    if need <= 0:
        return _finish(model, prob, prob.x0.copy(), 0.0)

    a_all = [it[1] for it in items]
    d_all = [it[2] for it in items]
    if sum(ai * di for ai, di in zip(a_all, d_all)) < need:
        return INFEASIBLE

    best = {"cost": float("inf"), "d": None, "support": None}

    def complete(support):
        a = [items[i][1] for i in support]
        dm = [items[i][2] for i in support]
        res = _water_fill(a, dm, prob.lambda1, prob.lambda2, need)
        if res is None:
            return
        cont, d = res
        cost = prob.lambda0 * sum(1 for di in d if di > 0) + cont
        if cost < best["cost"] - tie_eps:
            best["cost"] = cost
            best["d"] = dict(zip(support, d))

    if prob.lambda0 <= tie_eps:
        complete(list(range(len(items))))
    else:
        # Branch on the support set. The bound relaxes lambda0 for undecided
        # features; when the relaxed solve only moves already-paid features
        # the node is solved exactly and closed.
        def dfs(support, undecided, base_lambda0):
            free = support + undecided
            if not free:
                return
            a = [items[k][1] for k in free]
            dm = [items[k][2] for k in free]
            res = _water_fill(a, dm, prob.lambda1, prob.lambda2, need)
            if res is None:
                return
            cont, d = res
            if base_lambda0 + cont > best["cost"] + tie_eps:
                return
            used_future = [free[k] for k in range(len(free)) if d[k] > 0 and free[k] in undecided]
            if not used_future:
                cost = base_lambda0 + cont
                if cost < best["cost"] - tie_eps:
                    best["cost"] = cost
                    best["d"] = {free[k]: d[k] for k in range(len(free)) if d[k] > 0}
                return
            branch = min(used_future)
            rest = [k for k in undecided if k != branch]
            dfs(support + [branch], rest, base_lambda0 + prob.lambda0)
            dfs(support, rest, base_lambda0)

        dfs([], list(range(len(items))), 0.0)

    if best["d"] is None:
        return INFEASIBLE
    x_ce = prob.x0.copy()
    for i, di in best["d"].items():
        j, _a, _dm, direction = items[i]
        x_ce[j] = prob.x0[j] + direction * di
    x_ce = np.clip(x_ce, prob.box[:, 0], prob.box[:, 1])
    return _finish(model, prob, x_ce, float(best["cost"]))


def solve_ce(model, prob: CEProblem, tie_eps: float = 1e-12) -> CESolution:
    if isinstance(model, LinearModel):
        return solve_linear_ce(model, prob, tie_eps)
    return solve_ensemble_ce(model, prob, tie_eps)


def brute_force_oracle(model, prob: CEProblem, grid_resolution: float = 1e-3) -> CESolution:
    """Test oracle: exhaustive search.

    Ensembles: Cartesian product over the candidate grid, margins evaluated
    by routing the full model (independent of the solver's decomposition).
    Linear models: a uniform grid of step `grid_resolution` per feature plus
    the exact x0 coordinate.
    """
    if isinstance(model, LinearModel):
        return _linear_grid_oracle(model, prob, grid_resolution)
    grid = build_candidates(model, prob)
    m = prob.x0.shape[0]
    best = None
    for combo in itertools.product(*[range(grid.values[j].size) for j in range(m)]):
        x = np.array([grid.values[j][combo[j]] for j in range(m)])
        margin = ensemble_margin(model, prob.y_ce, x)
        if margin < prob.margin:
            continue
        cost = float(sum(grid.costs[j][combo[j]] for j in range(m)))
        nch = int(sum(bool(grid.changed[j][combo[j]]) for j in range(m)))
        key = (cost, nch, combo)
        if best is None or key < best[0]:
            best = (key, x, margin)
    if best is None:
        return INFEASIBLE
    (cost, _nch, _combo), x, margin = best
    changed = tuple(int(j) for j in np.flatnonzero(np.abs(x - prob.x0) > prob.eps))
    return CESolution(status="optimal", x_ce=x, cost=cost, changed=changed, margin_achieved=margin)


def _linear_grid_oracle(model: LinearModel, prob: CEProblem, res: float) -> CESolution:
    sy = margin_sign(prob.y_ce)
    m = prob.x0.shape[0]
    axes = []
    for j in range(m):
        if j in prob.immutable:
            axes.append(np.array([prob.x0[j]]))
            continue
        lo, hi = prob.box[j]
        n = int(round((hi - lo) / res)) + 1
        vals = np.unique(np.append(np.linspace(lo, hi, n), prob.x0[j]))
        axes.append(vals)
    mesh = np.meshgrid(*axes, indexing="ij")
    raw = model.b
    cost = np.zeros(mesh[0].shape)
    nonzero = np.zeros(mesh[0].shape, dtype=np.int64)
    for j in range(m):
        raw = raw + model.w[j] * mesh[j]
        delta = np.abs(mesh[j] - prob.x0[j])
        moved = mesh[j] != prob.x0[j]
        cost += np.where(moved, prob.lambda0 + prob.lambda1 * delta + prob.lambda2 * delta**2, 0.0)
        nonzero += moved
    feasible = sy * raw >= 1.0
    best_cost = np.inf
    best_x = None
    if feasible.any():
        masked = np.where(feasible, cost, np.inf)
        flat = int(np.argmin(masked))
        idx = np.unravel_index(flat, masked.shape)
        best_cost = float(masked[idx])
        best_x = np.array([axes[j][idx[j]] for j in range(m)])

    # The grid alone overshoots whenever the optimum sits exactly on the
    # class boundary. Per coordinate the cost is monotone in the move size,
    # so with the other features fixed on the grid the best value of feature
    # j is the exact boundary crossing (clipped to the box); add those
    # completions as candidates.
    for j in range(m):
        if j in prob.immutable or model.w[j] == 0.0:
            continue
        other = [axes[k] for k in range(m) if k != j]
        omesh = np.meshgrid(*other, indexing="ij") if other else []
        raw_o = np.zeros(omesh[0].shape if omesh else ()) + model.b
        cost_o = np.zeros_like(raw_o)
        oi = 0
        for k in range(m):
            if k == j:
                continue
            v = omesh[oi]
            oi += 1
            raw_o = raw_o + model.w[k] * v
            d = np.abs(v - prob.x0[k])
            mv = v != prob.x0[k]
            cost_o = cost_o + np.where(mv, prob.lambda0 + prob.lambda1 * d + prob.lambda2 * d * d, 0.0)
        t = (1.0 - sy * raw_o) / (sy * model.w[j])
        lo, hi = prob.box[j]
        if sy * model.w[j] > 0:
            xj = np.maximum(t, prob.x0[j])
            ok = t <= hi
        else:
            xj = np.minimum(t, prob.x0[j])
            ok = t >= lo
        if not np.any(ok):
            continue
        d = np.abs(xj - prob.x0[j])
        mv = xj != prob.x0[j]
        tot = cost_o + np.where(mv, prob.lambda0 + prob.lambda1 * d + prob.lambda2 * d * d, 0.0)
        tot = np.where(ok, tot, np.inf)
        flat = int(np.argmin(tot))
        if float(tot.flat[flat]) >= best_cost:
            continue
        oidx = np.unravel_index(flat, tot.shape) if omesh else ()
        x = np.empty(m)
        oi = 0
        for k in range(m):
            if k == j:
                x[k] = np.asarray(xj)[oidx] if omesh else float(xj)
            else:
                x[k] = other[oi][oidx[oi]]
                oi += 1
        if sy * (np.dot(model.w, x) + model.b) >= 1.0 - 1e-9:
            best_cost = float(tot.flat[flat])
            best_x = x

    if best_x is None:
        return INFEASIBLE
    margin = float(sy * (np.dot(model.w, best_x) + model.b))
    changed = tuple(int(j) for j in np.flatnonzero(np.abs(best_x - prob.x0) > prob.eps))
    return CESolution(status="optimal", x_ce=best_x, cost=best_cost, changed=changed, margin_achieved=margin)


def solve_batch(model, problems: list[CEProblem], tie_eps: float = 1e-12) -> list[CESolution]:
    """Solve independent problems; result order matches input order."""
    return [solve_ce(model, p, tie_eps) for p in problems]


def export_batch_csv(path, solutions, problems, feature_names, scaler=None) -> None:
    """Batch results as CSV: index, status, cost, changed features, and the
    counterfactual coordinates in scaled and (when a scaler is given)
    original units."""
    m = len(feature_names)
    header = ["index", "status", "cost", "changed_features"]
    header += [f"x_ce:{name}" for name in feature_names]
    if scaler is not None:
        header += [f"x_ce_orig:{name}" for name in feature_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, (sol, prob) in enumerate(zip(solutions, problems)):
            if not sol.is_optimal:
                w.writerow([i, sol.status, "", ""] + [""] * (m if scaler is None else 2 * m))
                continue
            row = [
                i,
                sol.status,
                repr(float(sol.cost)),
                ";".join(feature_names[j] for j in sol.changed),
            ]
            row += [repr(float(v)) for v in sol.x_ce]
            if scaler is not None:
                row += [
                    repr(float(scaler[j][0] + sol.x_ce[j] * (scaler[j][1] - scaler[j][0])))
                    for j in range(m)
                ]
            w.writerow(row)
