"""Depth-first branch-and-bound for GAP (and knapsack as the m = 1 case).

The search runs in two phases:

1. Find the optimal value.  Items are branched in decreasing order of their
   Lagrangian reduced profit; every node is bounded by the Lagrangian
   relaxation of the capacity constraints (O(m) per node) and, when that
   fails to prune, by per-bin fractional knapsack bounds on the residual
   capacities with the one-bin-per-item rows priced by the same multipliers.
2. Recover the canonical optimum, the lexicographically smallest optimal
   assignment vector (knapsacks ascending, unassigned ordered last), by
   fixing items in index order and testing each smaller option with a
   reachability search against the phase-1 value.
"""

from __future__ import annotations

import sys

import numpy as np

from ..instance import Assignment, GapInstance, assignment_value
from .common import Budget, BudgetExhausted, Clock, SolveResult, Status

_EPS = np.finfo(np.float64).eps
_LAMBDA_SWEEPS = 60


class _Found(Exception):
    pass


def _reduced(values, weights, feasible, lam):
    red = values - lam[None, :] * weights
    return np.where(feasible, red, -np.inf)


def lagrangian_multipliers(values, weights, capacities, sweeps: int = _LAMBDA_SWEEPS) -> np.ndarray:
    """Multipliers for the capacity constraints by exact coordinate descent.

    For each knapsack in turn the dual function is minimised over ``lambda_j``
    with the others fixed (a weighted-median breakpoint search).  For a single
    knapsack this lands on the critical density, so the bound equals the
    fractional greedy value.
    """
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    c = np.asarray(capacities, dtype=np.float64)
    n, m = v.shape
    lam = np.zeros(m)
    if n == 0:
        return lam
    feasible = w <= c[None, :]
    for _ in range(sweeps):
        changed = False
        for j in range(m):
            red = _reduced(v, w, feasible, lam)
            if m > 1:
                others = np.delete(red, j, axis=1).max(axis=1)
                a = np.maximum(others, 0.0)
            else:
                a = np.zeros(n)
            live = feasible[:, j] & (v[:, j] > a)
            bp = (v[live, j] - a[live]) / w[live, j]
            wl = w[live, j]
            order = np.argsort(-bp, kind="stable")
            cum = np.cumsum(wl[order])
            k = int(np.searchsorted(cum, c[j], side="right"))
            new = float(bp[order[k]]) if k < order.size else 0.0
            if abs(new - lam[j]) > 1e-12 * max(1.0, abs(new)):
                changed = True
            lam[j] = new
        if not changed or m == 1:
            break
    return lam


def lagrangian_bound(values, weights, capacities, lam) -> float:
    """Upper bound ``sum_j lam_j C_j + sum_i max(0, max_j (v_ij - lam_j w_ij))``."""
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    c = np.asarray(capacities, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if v.shape[0] == 0:
        return float(lam @ c)
    red = _reduced(v, w, w <= c[None, :], lam)
    return float(lam @ c + np.maximum(red.max(axis=1), 0.0).sum())


def _greedy(v, w, c, lam, order) -> np.ndarray:
    """Two cheap incumbents; returns the better assignment vector."""
    n, m = v.shape
    best_vec, best_val = np.full(n, -1), -1.0
    red = v - lam[None, :] * w
    for rule in ("reduced", "density"):
        res = c.copy()
        vec = np.full(n, -1)
        if rule == "reduced":
            seq = [(i, j) for i in order for j in np.argsort(-red[i], kind="stable")]
        else:
            dens = (v / w).ravel()
            flat = np.argsort(-dens, kind="stable")
            seq = [(int(f // m), int(f % m)) for f in flat]
        for i, j in seq:
            if vec[i] < 0 and w[i, j] <= res[j]:
                vec[i] = j
                res[j] -= w[i, j]
        val = float(sum(v[i, vec[i]] for i in range(n) if vec[i] >= 0))
        if val > best_val:
            best_vec, best_val = vec, val
    return best_vec


class _Search:
    def __init__(self, inst: GapInstance, clock: Clock, lam: np.ndarray):
        self.v = np.asarray(inst.values)
        self.w = np.asarray(inst.weights)
        self.c = np.asarray(inst.capacities, dtype=np.float64)
        self.n, self.m = self.v.shape
        self.clock = clock
        self.lam = lam
        feasible = self.w <= self.c[None, :]
        red = _reduced(self.v, self.w, feasible, lam)
        self.r = np.maximum(red.max(axis=1), 0.0)
        # python-level copies: scalar indexing into lists is much faster
        self.vl = self.v.tolist()
        self.wl = self.w.tolist()
        self.redl = np.where(feasible, self.v - lam[None, :] * self.w, -np.inf).tolist()
        self.laml = lam.tolist()
        self.rl = self.r.tolist()
        self.feas = [[j for j in range(self.m) if feasible[i, j]] for i in range(self.n)]
        # per-bin orders for the penalised fractional bound; item i pays r_i
        # up front, so pair (i, j) is worth v_ij - r_i inside knapsack j
        adj = self.v - self.r[:, None]
        self.bin_order = []
        for j in range(self.m):
            ok = np.flatnonzero(feasible[:, j] & (adj[:, j] > 0))
            o = ok[np.argsort(-adj[ok, j] / self.w[ok, j], kind="stable")]
            self.bin_order.append((o, adj[o, j], self.w[o, j]))
        self.free = np.ones(self.n, dtype=bool)
        self.res = self.c.tolist()
        self.vec = [-1] * self.n

    # -- bounds ----------------------------------------------------------------

    def frac_bound(self) -> float:
        """Per-knapsack fractional bound after relaxing the one-bin-per-item
        rows with penalties ``r``; never weaker than the Lagrangian bound."""
        total = 0.0
        free = self.free
        for j in range(self.m):
            o, vs, ws = self.bin_order[j]
            cap = self.res[j]
            sel = free[o] & (ws <= cap)
            if not sel.any():
                continue
            ws_ = ws[sel]
            vs_ = vs[sel]
            cw = np.cumsum(ws_)
            k = int(np.searchsorted(cw, cap, side="right"))
            total += float(vs_[:k].sum())
            if k < ws_.size:
                used = float(cw[k - 1]) if k else 0.0
                total += float(vs_[k]) * (cap - used) / float(ws_[k])
        return total

    # -- search ----------------------------------------------------------------

    def _prepare(self, fix: dict):
        """Reset the node state with the items in ``fix`` decided up front."""
        self.res = self.c.tolist()
        self.vec = [-1] * self.n
        self.free[:] = True
        fixed = 0.0
        lam_res = float(self.lam @ self.c)
        for i, j in fix.items():
            self.free[i] = False
            if j >= 0:
                self.vec[i] = j
                self.res[j] -= self.wl[i][j]
                fixed += self.vl[i][j]
                lam_res -= self.laml[j] * self.wl[i][j]
        self.order = [i for i in self.base_order if i not in fix]
        k = len(self.order)
        suf = [0.0] * (k + 1)
        for t in range(k - 1, -1, -1):
            suf[t] = suf[t + 1] + self.rl[self.order[t]]
        self.suf = suf
        self.depth = k
        return fixed, lam_res

    def optimise(self, incumbent) -> tuple[float, list]:
        self.base_order = sorted(range(self.n), key=lambda i: (-self.rl[i], i))
        self.best_vec = [int(x) for x in incumbent]
        self.best = sum(self.vl[i][j] for i, j in enumerate(self.best_vec) if j >= 0)
        scale = max(1.0, sum(self.rl) + float(self.lam @ self.c))
        self.tol = 4 * (self.n + 1) * _EPS * scale
        self.need = self.best + self.tol
        self.reach_only = False
        self._dfs(0, *self._prepare({}))
        return self.best, self.best_vec

    def reach(self, fix: dict, floor: float):
        """A completion of ``fix`` worth at least ``floor``, or None."""
        self.need = floor
        self.reach_only = True
        try:
            self._dfs(0, *self._prepare(fix))
        except _Found:
            return list(self.vec)
        return None

    def _dfs(self, level, fixed, lam_res):
        self.clock.tick()
        if level == self.depth:
            if fixed >= self.need:
                if self.reach_only:
                    raise _Found
                self.best = fixed
                self.best_vec = list(self.vec)
                self.need = fixed + self.tol
            return
        if fixed + lam_res + self.suf[level] < self.need:
            return
        if fixed + self.suf[level] + self.frac_bound() < self.need:
            return
        i = self.order[level]
        vi, wi, redi, res = self.vl[i], self.wl[i], self.redl[i], self.res
        kids = [j for j in self.feas[i] if wi[j] <= res[j]]
        kids.sort(key=lambda j: -redi[j])
        self.free[i] = False
        skipped = False
        for j in kids:
            if redi[j] <= 0 and not skipped:
                skipped = True
                self.vec[i] = -1
                self._dfs(level + 1, fixed, lam_res)
            old = res[j]
            res[j] = old - wi[j]
            self.vec[i] = j
            self._dfs(level + 1, fixed + vi[j], lam_res - self.laml[j] * wi[j])
            res[j] = old
        self.vec[i] = -1
        if not skipped:
            self._dfs(level + 1, fixed, lam_res)
        self.free[i] = True

    # -- canonical optimum -----------------------------------------------------

    def canonical(self, target: float, vec: list) -> list:
        """Lexicographically smallest assignment vector worth ``target``.

        Items are fixed in index order.  For each item the options that sort
        before the current optimum's choice (knapsacks ascending, then skip)
        are tried with a reachability search; the first that still reaches
        the target is kept.
        """
        floor = target - self.tol
        cur = list(vec)
        fix = {}
        res = self.c.tolist()
        for i in range(self.n):
            options = [j for j in self.feas[i] if self.wl[i][j] <= res[j]] + [-1]
            for o in options:
                if o == cur[i]:
                    break
                fix[i] = o
                found = self.reach(fix, floor)
                if found is not None:
                    cur = found
                    break
            fix[i] = cur[i]
            if cur[i] >= 0:
                res[cur[i]] -= self.wl[i][cur[i]]
        return cur


def gap_exact(
    inst: GapInstance,
    budget: Budget | None = None,
    canonical: bool = True,
    multipliers=None,
) -> SolveResult:
    """Exact GAP by branch-and-bound.

    ``budget`` caps nodes and/or wall time; on exhaustion the best incumbent is
    returned with status ``BUDGET_EXCEEDED``.  With ``canonical=True`` the
    returned optimum is the lexicographically smallest optimal assignment
    vector, which makes the solution a deterministic function of the data.
    ``multipliers`` optionally supplies capacity duals (e.g. from the LP).
    """
    clock = Clock(budget)
    if inst.n == 0:
        return SolveResult(0.0, Assignment(), Status.EMPTY, 0, clock.elapsed())
    if multipliers is None:
        lam = lagrangian_multipliers(inst.values, inst.weights, inst.capacities)
    else:
        lam = np.maximum(np.asarray(multipliers, dtype=np.float64), 0.0)
    search = _Search(inst, clock, lam)
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * inst.n + 1000))
    order = sorted(range(inst.n), key=lambda i: (-search.rl[i], i))
    incumbent = _greedy(search.v, search.w, search.c, lam, order)

    status = Status.OPTIMAL
    is_canonical = False
    try:
        best, vec = search.optimise(incumbent)
    except BudgetExhausted:
        vec = search.best_vec
        status = Status.BUDGET_EXCEEDED
    if status is Status.OPTIMAL and canonical:
        try:
            vec = search.canonical(best, vec)
            is_canonical = True
        except BudgetExhausted:
            pass
    a = Assignment.from_vector(vec)
    return SolveResult(
        assignment_value(inst, a), a, status, clock.nodes, clock.elapsed(),
        canonical=is_canonical, info={"multipliers": lam.tolist()},
    )
