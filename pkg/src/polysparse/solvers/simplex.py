"""Dense-tableau primal simplex for the GAP LP relaxation.

    max  sum v_ij y_ij
    s.t. sum_j y_ij <= 1          for every item i
         sum_i w_ij y_ij <= C_j   for every knapsack j
         y >= 0,  y_ij = 0 when w_ij > C_j

All right-hand sides are non-negative, so the slack basis is feasible and no
phase one is needed.  Pivoting follows Bland's rule, which cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..instance import GapInstance

PIVOT_EPS = 1e-9
MAX_VARIABLES = 20_000


class LPSizeError(ValueError):
    """The LP is too large for the dense tableau."""


@dataclass
class LPResult:
    value: float
    y: np.ndarray  # n x m fractional assignment
    item_duals: np.ndarray  # one per item row
    capacity_duals: np.ndarray  # one per knapsack row
    iterations: int


def gap_lp(inst: GapInstance, max_variables: int = MAX_VARIABLES, eps: float = PIVOT_EPS) -> LPResult:
    n, m = inst.n, inst.m
    v = np.asarray(inst.values)
    w = np.asarray(inst.weights)
    c = np.asarray(inst.capacities)
    pairs = np.argwhere(w <= c[None, :])  # row-major: (i, j) ascending
    nv = pairs.shape[0]
    if nv > max_variables:
        raise LPSizeError(
            f"LP has {nv} variables, above the dense-simplex limit of {max_variables}; "
            "use the Lagrangian bound (lagrangian_bound) instead"
        )
    if n == 0 or nv == 0:
        return LPResult(0.0, np.zeros((n, m)), np.zeros(n), np.zeros(m), 0)

    rows = n + m
    width = nv + rows + 1
    T = np.zeros((rows, width))
    pi, pj = pairs[:, 0], pairs[:, 1]
    cols = np.arange(nv)
    T[pi, cols] = 1.0
    T[n + pj, cols] = w[pi, pj]
    T[np.arange(rows), nv + np.arange(rows)] = 1.0
    T[:n, -1] = 1.0
    T[n:, -1] = c
    # reduced costs; the last entry holds -objective
    obj = np.zeros(width)
    obj[:nv] = v[pi, pj]
    basis = np.arange(nv, nv + rows)

    iterations = 0
    while True:
        entering = np.flatnonzero(obj[:-1] > eps)
        if entering.size == 0:
            break
        k = int(entering[0])
        col = T[:, k]
        pos = np.flatnonzero(col > eps)
        if pos.size == 0:  # cannot happen for a bounded feasible region
            raise RuntimeError("LP unbounded")
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        tied = pos[ratios <= best + eps * max(1.0, abs(best))]
        r = int(tied[np.argmin(basis[tied])])
        T[r] /= T[r, k]
        # eliminate only in rows that carry the entering column
        rows_nz = np.flatnonzero(T[:, k])
        rows_nz = rows_nz[rows_nz != r]
        if rows_nz.size:
            T[rows_nz] -= np.outer(T[rows_nz, k], T[r])
        obj -= obj[k] * T[r]
        basis[r] = k
        iterations += 1

    y = np.zeros((n, m))
    for r, b in enumerate(basis):
        if b < nv:
            y[pi[b], pj[b]] = max(T[r, -1], 0.0)
    duals = -obj[nv : nv + rows]
    return LPResult(
        float(-obj[-1]), y, np.maximum(duals[:n], 0.0), np.maximum(duals[n:], 0.0), iterations
    )
