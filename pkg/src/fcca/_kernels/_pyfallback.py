"""Pure-Python twins of the compiled search kernels.

fcca._kernels prefers the compiled extension (fcca._kernels._core) and falls
back to this module. Both implementations must produce identical output,
including tie-breaking, so tests can assert cross-implementation equality.
"""

from __future__ import annotations

from bisect import bisect_left

IMPLEMENTATION = "python"


def _group_hull(items):
    """Pareto frontier and upper concave hull of (cost, gain) candidates.

    Returns (base_cost, base_gain, edges); edges are (efficiency, dcost,
    dgain) tuples with decreasing efficiency along the hull. The base item is
    the cheapest candidate (best gain among equal-cost ones).
    """
    pts = sorted(items, key=lambda cg: (cg[0], -cg[1]))
    pareto = []
    best = float("-inf")
    for c, g in pts:
        if g > best:
            pareto.append((c, g))
            best = g
    hull = [pareto[0]]
    for c, g in pareto[1:]:
        while len(hull) >= 2:
            c1, g1 = hull[-2]
            c2, g2 = hull[-1]
            if (g2 - g1) * (c - c2) <= (g - g2) * (c2 - c1):
                hull.pop()
            else:
                break
        hull.append((c, g))
    edges = []
    for (c1, g1), (c2, g2) in zip(hull, hull[1:]):
        edges.append(((g2 - g1) / (c2 - c1), c2 - c1, g2 - g1))
    return hull[0][0], hull[0][1], edges


def mckp_solve(costs, gains, changed, group_start, group_len, x0_idx, need, tie_eps=1e-12):
    """Exact multiple-choice selection: one candidate per group, total gain at
    least `need`, minimum total cost.

    Flat layout: group g owns slots group_start[g] .. group_start[g] +
    group_len[g] - 1 of costs/gains/changed; x0_idx[g] is the within-group
    index of the stay-put candidate, which must have cost 0 and gain 0.
    Branch-and-bound over groups in decreasing best-gain order; the node
    bound is accumulated cost plus an LP relaxation over per-group
    convex-hull frontiers. Costs within tie_eps of the best tie-break by
    fewer changed candidates, then by the lexicographically smallest index
    vector in the caller's group order.

    Returns (feasible, cost, indices, n_changed, gain_total).
    """
    ngroups = len(group_start)
    if ngroups == 0:
        if need <= 0.0:
            return 1, 0.0, [], 0, 0.0
        return 0, 0.0, None, 0, 0.0

    groups = []
    for g in range(ngroups):
        s = int(group_start[g])
        grp = [(float(costs[s + i]), float(gains[s + i]), i) for i in range(int(group_len[g]))]
        groups.append(grp)

    max_gain = [max(it[1] for it in grp) for grp in groups]
    order = sorted(range(ngroups), key=lambda g: (-max_gain[g], g))

    suffix_max = [0.0] * (ngroups + 1)
    for k in range(ngroups - 1, -1, -1):
        suffix_max[k] = suffix_max[k + 1] + max_gain[order[k]]

    hulls = [_group_hull([(c, gn) for c, gn, _ in groups[order[k]]]) for k in range(ngroups)]
    base_cost = [0.0] * (ngroups + 1)
    base_gain = [0.0] * (ngroups + 1)
    tables = [((), (), ())] * (ngroups + 1)
    acc = []
    for k in range(ngroups - 1, -1, -1):
        base_cost[k] = base_cost[k + 1] + hulls[k][0]
        base_gain[k] = base_gain[k + 1] + hulls[k][1]
        acc = sorted(acc + list(hulls[k][2]), key=lambda e: -e[0])
        pg, pc = [], []
        tg = tc = 0.0
        for _, dc, dg in acc:
            tg += dg
            tc += dc
            pg.append(tg)
            pc.append(tc)
        tables[k] = (tuple(acc), tuple(pg), tuple(pc))

    def suffix_lb(k, required):
        rem = required - base_gain[k]
        if rem <= 0.0:
            return base_cost[k]
        edges, pg, pc = tables[k]
        i = bisect_left(pg, rem)
        if i == len(pg):
            return float("inf")
        prev_g = pg[i - 1] if i else 0.0
        prev_c = pc[i - 1] if i else 0.0
        _, dc, dg = edges[i]
        return base_cost[k] + prev_c + (rem - prev_g) * dc / dg

    cand = [sorted(groups[order[k]], key=lambda it: (it[0], it[2])) for k in range(ngroups)]

    chosen = [0] * ngroups
    state = {"cost": float("inf"), "tb": None, "idx": None, "gain": 0.0}

    def record(upto, cost, gain):
        idx = [0] * ngroups
        nch = 0
        for k in range(ngroups):
            g = order[k]
            ci = chosen[k] if k < upto else int(x0_idx[g])
            idx[g] = ci
            if changed[int(group_start[g]) + ci]:
                nch += 1
        if cost < state["cost"] - tie_eps:
            better = True
        elif cost <= state["cost"] + tie_eps:
            better = state["tb"] is None or (nch, idx) < state["tb"]
        else:
            better = False
        if better:
            state["cost"] = cost
            state["tb"] = (nch, idx)
            state["idx"] = idx
            state["gain"] = gain

    def dfs(k, cost, gain):
        if gain >= need:
            record(k, cost, gain)
        if k == ngroups:
            return
        if gain + suffix_max[k] < need:
            return
        if cost + suffix_lb(k, need - gain) > state["cost"] + tie_eps:
            return
        for c_i, g_i, i_i in cand[k]:
            chosen[k] = i_i
            dfs(k + 1, cost + c_i, gain + g_i)

    dfs(0, 0.0, 0.0)
    if state["idx"] is None:
        return 0, 0.0, None, 0, 0.0
    return 1, state["cost"], list(state["idx"]), state["tb"][0], state["gain"]


def tree_search(bits, count0, count1, n_rows, max_depth, lambda_reg, max_memo=4_000_000):
    """Globally optimal depth-bounded decision tree over binary columns.

    bits is an (n_cells, n_cols) 0/1 matrix of distinct row patterns with
    per-cell label counts count0/count1. Minimizes
    misclassified/n_rows + lambda_reg * leaves over all trees of depth at
    most max_depth, by memoized recursion on (cell subset, depth) with an
    irreducible-error lower bound. Ties prefer a leaf over a split, then
    fewer leaves, then the lowest column index.

    Returns (err, leaves, nodes): err is the misclassified-row count and
    nodes the preorder encoding, (-1, label) for leaves and (col, -1) for
    internal nodes; the left child takes column value 0.
    """
    n_cells = len(count0)
    n_cols = len(bits[0]) if n_cells else 0
    if n_cells == 0 or n_cols == 0:
        raise ValueError("tree search needs at least one cell and one column")

    col_mask = [0] * n_cols
    for i in range(n_cells):
        row = bits[i]
        for c in range(n_cols):
            if row[c]:
                col_mask[c] |= 1 << i

    c0 = [int(v) for v in count0]
    c1 = [int(v) for v in count1]
    cmin = [min(a, b) for a, b in zip(c0, c1)]
    lam_n = float(lambda_reg) * float(n_rows)

    memo = {}

    def counts3(subset):
        s0 = s1 = eq = 0
        s = subset
        while s:
            low = s & -s
            i = low.bit_length() - 1
            s0 += c0[i]
            s1 += c1[i]
            eq += cmin[i]
            s ^= low
        return s0, s1, eq

    def best(subset, depth):
        key = (subset, depth)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= max_memo:
            raise RuntimeError("optimal-tree search exceeded the memo budget")
        s0, s1, eq = counts3(subset)
        best_err = s0 if s1 > s0 else s1
        best_leaves = 1
        best_col = -1
        best_score = best_err + lam_n
        if depth > 0 and best_err - eq > lam_n:
            lb_split = eq + 2.0 * lam_n
            for col in range(n_cols):
                if lb_split > best_score:
                    break
                s_hi = subset & col_mask[col]
                if s_hi == 0 or s_hi == subset:
                    continue
                s_lo = subset ^ s_hi
                e0, l0, _ = best(s_lo, depth - 1)
                _, _, eq_hi = counts3(s_hi)
                if e0 + lam_n * l0 + eq_hi + lam_n > best_score:
                    continue
                e1, l1, _ = best(s_hi, depth - 1)
                err = e0 + e1
                leaves = l0 + l1
                score = err + lam_n * leaves
                if score < best_score or (score == best_score and leaves < best_leaves):
                    best_err, best_leaves, best_col, best_score = err, leaves, col, score
        res = (best_err, best_leaves, best_col)
        memo[key] = res
        return res

    root = (1 << n_cells) - 1
    err, leaves, _ = best(root, max_depth)

    nodes = []

    def emit(subset, depth):
        _, _, col = memo[(subset, depth)]
        if col < 0:
            s0, s1, _ = counts3(subset)
            nodes.append((-1, 1 if s1 > s0 else 0))
            return
        nodes.append((col, -1))
        s_hi = subset & col_mask[col]
        emit(subset ^ s_hi, depth - 1)
        emit(s_hi, depth - 1)

    emit(root, max_depth)
    return err, leaves, nodes
