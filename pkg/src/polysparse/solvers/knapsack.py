"""Single knapsack: fractional greedy bound and exact DP / branch-and-bound."""

from __future__ import annotations

import time

import numpy as np

from ..instance import Assignment, GapInstance
from .common import Budget, SolveResult, Status

DP_MAX_CAPACITY = 10**6
DP_MAX_CELLS = 4_000_000


def density_order(values, weights) -> np.ndarray:
    """Indices by decreasing v/w; ties keep ascending index."""
    d = np.asarray(values, dtype=np.float64) / np.asarray(weights, dtype=np.float64)
    return np.argsort(-d, kind="stable")


def kp_fractional_greedy(values, weights, capacity) -> float:
    """Optimum of the knapsack LP relaxation (Dantzig bound)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if np.any(w <= 0):
        raise ValueError("weights must be > 0")
    room = float(capacity)
    total = 0.0
    for i in density_order(v, w):
        if w[i] <= room:
            total += v[i]
            room -= w[i]
        else:
            total += v[i] * (room / w[i])
            break
    return total


def _dp_applicable(w: np.ndarray, capacity: float) -> bool:
    if w.size == 0 or capacity > DP_MAX_CAPACITY:
        return False
    if not np.all(w == np.round(w)):
        return False
    return (w.size + 1) * (int(capacity) + 1) <= DP_MAX_CELLS


def _kp_dp(v: np.ndarray, w: np.ndarray, capacity: float) -> list[int]:
    """Lexicographically smallest optimal selection (prefer taking low indices)."""
    n = v.size
    cap = int(np.floor(capacity))
    wi = w.astype(np.int64)
    # best[k, c]: optimum over items k..n-1 with capacity c
    best = np.zeros((n + 1, cap + 1))
    for k in range(n - 1, -1, -1):
        nxt = best[k + 1]
        cur = nxt.copy()
        if wi[k] <= cap:
            take = nxt[: cap + 1 - wi[k]] + v[k]
            np.maximum(cur[wi[k]:], take, out=cur[wi[k]:])
        best[k] = cur
    chosen = []
    c = cap
    for k in range(n):
        if wi[k] <= c and best[k + 1][c - wi[k]] + v[k] == best[k][c]:
            chosen.append(k)
            c -= wi[k]
    return chosen


def kp_exact(values, weights, capacity, budget: Budget | None = None, canonical: bool = True) -> SolveResult:
    """Exact 0/1 knapsack.

    Integer weights with a small capacity use a dynamic program; everything
    else goes through the branch-and-bound of :func:`gap_exact`.  Among
    optimal selections the one that takes the lowest item indices wins.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    t0 = time.monotonic()
    if v.size == 0:
        return SolveResult(0.0, Assignment(), Status.EMPTY, 0, time.monotonic() - t0)
    if np.any(w <= 0):
        raise ValueError("weights must be > 0")
    if _dp_applicable(w, capacity):
        chosen = _kp_dp(v, w, capacity)
        value = 0.0
        for i in chosen:
            value += v[i]
        return SolveResult(
            value, Assignment(tuple((i, 0) for i in chosen)), Status.OPTIMAL, 0,
            time.monotonic() - t0, info={"method": "dp"},
        )
    from .bnb import gap_exact

    # items heavier than the knapsack are never usable; drop them so the
    # instance invariant (individual feasibility) holds for the B&B
    keep = np.flatnonzero(w <= capacity)
    if keep.size == 0:
        return SolveResult(0.0, Assignment(), Status.OPTIMAL, 0, time.monotonic() - t0)
    inst = GapInstance.knapsack(v[keep], w[keep], capacity)
    res = gap_exact(inst, budget, canonical=canonical)
    res.assignment = res.assignment.remap(keep)
    res.wall_time = time.monotonic() - t0
    return res
