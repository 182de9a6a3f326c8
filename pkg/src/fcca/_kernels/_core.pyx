# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled search kernels: exact multiple-choice selection and optimal
depth-bounded trees over binary columns.

Semantics mirror fcca._kernels._pyfallback exactly, including tie-breaking;
the cross-implementation tests assert identical outputs.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.math cimport INFINITY

cnp.import_array()

IMPLEMENTATION = "compiled"

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


@cython.wraparound(True)  # plain Python list indexing below
def _group_hull(items):
    """Pareto frontier and upper concave hull of (cost, gain) candidates."""
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


cdef class _Mckp:
    cdef double[::1] kcost, kgain
    cdef long long[::1] kidx, kstart, klen
    cdef double[::1] suffix_max, base_cost, base_gain
    cdef double[::1] t_pg, t_pc, t_dc, t_dg
    cdef long long[::1] t_start, t_len
    cdef long long[::1] order, grp_start, x0
    cdef unsigned char[::1] changed
    cdef long long[::1] chosen, best_idx, tmp_idx
    cdef double need, tie_eps, best_cost, best_gain
    cdef long long best_nch
    cdef bint have_best
    cdef int ngroups

    cdef double suffix_lb(self, int k, double required):
        cdef double rem, prev_g, prev_c
        cdef long long lo, n, a, b, mid
        rem = required - self.base_gain[k]
        if rem <= 0.0:
            return self.base_cost[k]
        lo = self.t_start[k]
        n = self.t_len[k]
        a = 0
        b = n
        while a < b:
            mid = (a + b) >> 1
            if self.t_pg[lo + mid] < rem:
                a = mid + 1
            else:
                b = mid
        if a == n:
            return INFINITY
        prev_g = self.t_pg[lo + a - 1] if a > 0 else 0.0
        prev_c = self.t_pc[lo + a - 1] if a > 0 else 0.0
        return self.base_cost[k] + prev_c + (rem - prev_g) * self.t_dc[lo + a] / self.t_dg[lo + a]

    cdef void record(self, int upto, double cost, double gain):
        cdef int k
        cdef long long g, ci, nch = 0
        cdef bint better
        for k in range(self.ngroups):
            g = self.order[k]
            ci = self.chosen[k] if k < upto else self.x0[g]
            self.tmp_idx[g] = ci
            if self.changed[self.grp_start[g] + ci]:
                nch += 1
        if cost < self.best_cost - self.tie_eps:
            better = True
        elif cost <= self.best_cost + self.tie_eps:
            if not self.have_best:
                better = True
            elif nch != self.best_nch:
                better = nch < self.best_nch
            else:
                better = False
                for k in range(self.ngroups):
                    if self.tmp_idx[k] != self.best_idx[k]:
                        better = self.tmp_idx[k] < self.best_idx[k]
                        break
        else:
            better = False
        if better:
            self.best_cost = cost
            self.best_gain = gain
            self.best_nch = nch
            for k in range(self.ngroups):
                self.best_idx[k] = self.tmp_idx[k]
            self.have_best = True

    cdef void dfs(self, int k, double cost, double gain):
        cdef long long j, s, n
        if gain >= self.need:
            self.record(k, cost, gain)
        if k == self.ngroups:
            return
        if gain + self.suffix_max[k] < self.need:
            return
        if cost + self.suffix_lb(k, self.need - gain) > self.best_cost + self.tie_eps:
            return
        s = self.kstart[k]
        n = self.klen[k]
        for j in range(n):
            self.chosen[k] = self.kidx[s + j]
            self.dfs(k + 1, cost + self.kcost[s + j], gain + self.kgain[s + j])


def mckp_solve(costs, gains, changed, group_start, group_len, x0_idx, need, tie_eps=1e-12):
    """Exact multiple-choice selection; see the fallback for the contract."""
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

    cand = [sorted(groups[order[k]], key=lambda it: (it[0], it[2])) for k in range(ngroups)]

    cdef _Mckp mk = _Mckp()
    mk.ngroups = ngroups
    mk.need = float(need)
    mk.tie_eps = float(tie_eps)
    mk.best_cost = INFINITY
    mk.best_gain = 0.0
    mk.best_nch = 0
    mk.have_best = False

    kcost, kgain, kidx, kstart, klen = [], [], [], [], []
    for k in range(ngroups):
        kstart.append(len(kcost))
        klen.append(len(cand[k]))
        for c_i, g_i, i_i in cand[k]:
            kcost.append(c_i)
            kgain.append(g_i)
            kidx.append(i_i)
    mk.kcost = np.asarray(kcost, dtype=np.float64)
    mk.kgain = np.asarray(kgain, dtype=np.float64)
    mk.kidx = np.asarray(kidx, dtype=np.int64)
    mk.kstart = np.asarray(kstart, dtype=np.int64)
    mk.klen = np.asarray(klen, dtype=np.int64)

    mk.suffix_max = np.asarray(suffix_max, dtype=np.float64)
    mk.base_cost = np.asarray(base_cost, dtype=np.float64)
    mk.base_gain = np.asarray(base_gain, dtype=np.float64)

    t_pg, t_pc, t_dc, t_dg, t_start, t_len = [], [], [], [], [], []
    for k in range(ngroups + 1):
        edges, pg, pc = tables[k]
        t_start.append(len(t_pg))
        t_len.append(len(pg))
        for e, g_, c_ in zip(edges, pg, pc):
            t_pg.append(g_)
            t_pc.append(c_)
            t_dc.append(e[1])
            t_dg.append(e[2])
    mk.t_pg = np.asarray(t_pg, dtype=np.float64) if t_pg else np.empty(0, dtype=np.float64)
    mk.t_pc = np.asarray(t_pc, dtype=np.float64) if t_pc else np.empty(0, dtype=np.float64)
    mk.t_dc = np.asarray(t_dc, dtype=np.float64) if t_dc else np.empty(0, dtype=np.float64)
    mk.t_dg = np.asarray(t_dg, dtype=np.float64) if t_dg else np.empty(0, dtype=np.float64)
    mk.t_start = np.asarray(t_start, dtype=np.int64)
    mk.t_len = np.asarray(t_len, dtype=np.int64)

    mk.order = np.asarray(order, dtype=np.int64)
    mk.grp_start = np.asarray([int(v) for v in group_start], dtype=np.int64)
    mk.x0 = np.asarray([int(v) for v in x0_idx], dtype=np.int64)
    mk.changed = np.ascontiguousarray([1 if v else 0 for v in changed], dtype=np.uint8)
    mk.chosen = np.zeros(ngroups, dtype=np.int64)
    mk.best_idx = np.zeros(ngroups, dtype=np.int64)
    mk.tmp_idx = np.zeros(ngroups, dtype=np.int64)

    mk.dfs(0, 0.0, 0.0)
    if not mk.have_best:
        return 0, 0.0, None, 0, 0.0
    return 1, float(mk.best_cost), [int(mk.best_idx[k]) for k in range(ngroups)], int(mk.best_nch), float(mk.best_gain)


cdef class _TreeSearch:
    cdef unsigned long long[:, ::1] masks
    cdef long long[::1] c0, c1, cmin
    cdef unsigned long long[:, ::1] pool
    cdef dict memo
    cdef double lam_n
    cdef int n_words, n_cols
    cdef long long max_memo

    cdef void counts3(self, unsigned long long* s, long long* out):
        cdef long long s0 = 0, s1 = 0, eq = 0
        cdef int w, base, idx
        cdef unsigned long long v, low
        for w in range(self.n_words):
            v = s[w]
            base = w << 6
            while v:
                low = v & (~v + 1)
                idx = base + __builtin_ctzll(low)
                s0 += self.c0[idx]
                s1 += self.c1[idx]
                eq += self.cmin[idx]
                v ^= low
        out[0] = s0
        out[1] = s1
        out[2] = eq

    cdef tuple best(self, unsigned long long* s, int depth, int level):
        cdef long long cnts[3]
        cdef long long s0, s1, eq, best_err, best_leaves, e0, l0, e1, l1, err, leaves
        cdef int best_col, col, w
        cdef double best_score, lb_split, score
        cdef bint empty, full
        cdef unsigned long long* s_lo
        cdef unsigned long long* s_hi

        key = (PyBytes_FromStringAndSize(<char*>s, self.n_words * 8), depth)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if len(self.memo) >= self.max_memo:
            raise RuntimeError("optimal-tree search exceeded the memo budget")

        self.counts3(s, cnts)
        s0 = cnts[0]
        s1 = cnts[1]
        eq = cnts[2]
        best_err = s0 if s1 > s0 else s1
        best_leaves = 1
        best_col = -1
        best_score = <double>best_err + self.lam_n
        if depth > 0 and <double>(best_err - eq) > self.lam_n:
            lb_split = <double>eq + 2.0 * self.lam_n
            s_lo = &self.pool[2 * level, 0]
            s_hi = &self.pool[2 * level + 1, 0]
            for col in range(self.n_cols):
                if lb_split > best_score:
                    break
                empty = True
                full = True
                for w in range(self.n_words):
                    s_hi[w] = s[w] & self.masks[col, w]
                    s_lo[w] = s[w] ^ s_hi[w]
                    if s_hi[w] != 0:
                        empty = False
                    if s_lo[w] != 0:
                        full = False
                if empty or full:
                    continue
                r0 = self.best(s_lo, depth - 1, level + 1)
                e0 = r0[0]
                l0 = r0[1]
                self.counts3(s_hi, cnts)
                if <double>e0 + self.lam_n * <double>l0 + <double>cnts[2] + self.lam_n > best_score:
                    continue
                r1 = self.best(s_hi, depth - 1, level + 1)
                e1 = r1[0]
                l1 = r1[1]
                err = e0 + e1
                leaves = l0 + l1
                score = <double>err + self.lam_n * <double>leaves
                if score < best_score or (score == best_score and leaves < best_leaves):
                    best_err = err
                    best_leaves = leaves
                    best_col = col
                    best_score = score
        res = (best_err, best_leaves, best_col)
        self.memo[key] = res
        return res


def tree_search(bits, count0, count1, n_rows, max_depth, lambda_reg, max_memo=4_000_000):
    """Optimal depth-bounded tree; see the fallback for the contract."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] b = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef int n_cells = b.shape[0]
    cdef int n_cols = b.shape[1]
    if n_cells == 0 or n_cols == 0:
        raise ValueError("tree search needs at least one cell and one column")
    cdef int n_words = (n_cells + 63) >> 6
    cdef int i, c

    mask_arr = np.zeros((n_cols, n_words), dtype=np.uint64)
    cdef unsigned long long[:, ::1] masks = mask_arr
    for i in range(n_cells):
        for c in range(n_cols):
            if b[i, c]:
                masks[c, i >> 6] |= (<unsigned long long>1) << (i & 63)

    cdef _TreeSearch ts = _TreeSearch()
    ts.masks = masks
    ts.c0 = np.ascontiguousarray(np.asarray(count0, dtype=np.int64))
    ts.c1 = np.ascontiguousarray(np.asarray(count1, dtype=np.int64))
    ts.cmin = np.minimum(np.asarray(ts.c0), np.asarray(ts.c1)).astype(np.int64)
    ts.n_words = n_words
    ts.n_cols = n_cols
    ts.lam_n = float(lambda_reg) * float(n_rows)
    ts.memo = {}
    ts.max_memo = int(max_memo)
    pool_arr = np.zeros((2 * (int(max_depth) + 2), n_words), dtype=np.uint64)
    ts.pool = pool_arr

    root_arr = np.zeros(n_words, dtype=np.uint64)
    cdef unsigned long long[::1] root = root_arr
    for i in range(n_cells):
        root[i >> 6] |= (<unsigned long long>1) << (i & 63)

    res = ts.best(&root[0], int(max_depth), 0)
    err, leaves = int(res[0]), int(res[1])

    nodes = []
    _emit(ts, root_arr, int(max_depth), nodes)
    return err, leaves, nodes


def _emit(_TreeSearch ts, cnp.ndarray subset, int depth, list nodes):
    cdef unsigned long long[::1] sv = subset
    cdef long long cnts[3]
    key = (PyBytes_FromStringAndSize(<char*>&sv[0], ts.n_words * 8), depth)
    _, _, col = ts.memo[key]
    if col < 0:
        ts.counts3(&sv[0], cnts)
        nodes.append((-1, 1 if cnts[1] > cnts[0] else 0))
        return
    nodes.append((col, -1))
    hi = np.bitwise_and(subset, np.asarray(ts.masks[col]))
    lo = np.bitwise_xor(subset, hi)
    _emit(ts, np.ascontiguousarray(lo), depth - 1, nodes)
    _emit(ts, np.ascontiguousarray(hi), depth - 1, nodes)
