"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's own solvers: exhaustive
enumeration for GAP and subset enumeration for knapsack.
"""

import itertools

import numpy as np
import pytest

from polysparse.generate import GenParams, generate, parse_marginal
from polysparse.instance import GapInstance

ACCEPTANCE_RESULTS = {}


def brute_gap(inst: GapInstance):
    """Best value and lexicographically smallest optimal vector by enumeration.

    Feasible partial assignments are expanded item by item; a branch is
    dropped as soon as a knapsack overflows, which loses nothing because
    weights are positive.  Values are summed in item order.
    """
    n, m = inst.n, inst.m
    v, w, c = inst.values, inst.weights, inst.capacities
    loads = np.zeros((1, m))
    vals = np.zeros(1)
    vecs = np.zeros((1, 0), dtype=np.int64)
    for i in range(n):
        new_l, new_v, new_x = [loads], [vals], [np.hstack([vecs, np.full((len(vals), 1), -1)])]
        for j in range(m):
            nl = loads.copy()
            nl[:, j] += w[i, j]
            ok = nl[:, j] <= c[j]
            new_l.append(nl[ok])
            new_v.append(vals[ok] + v[i, j])
            new_x.append(np.hstack([vecs[ok], np.full((int(ok.sum()), 1), j)]))
        loads = np.vstack(new_l)
        vals = np.concatenate(new_v)
        vecs = np.vstack(new_x)
    best = vals.max()
    cand = vecs[vals == best]
    # canonical order puts "unassigned" after every knapsack index
    keys = np.where(cand < 0, m, cand)
    order = np.lexsort(keys.T[::-1])
    return float(best), cand[order[0]]


def brute_kp(values, weights, capacity):
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = v.size
    if n == 0:
        return 0.0
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
    tw = masks @ w
    tv = masks @ v
    return float(tv[tw <= capacity].max())


MARGINAL_NAMES = ("uniform", "truncnormal")


def random_small_gap(rng, n_max=12, m_max=3, seed=None):
    """A generated GAP instance with random copula settings and n <= n_max."""
    while True:
        gp = GenParams(
            n=int(rng.integers(1, n_max + 1)),
            m=int(rng.integers(1, m_max + 1)),
            rho=float(rng.choice([-0.8, -0.5, -0.3, 0.0, 0.3, 0.5, 0.8])),
            redundancy_target=float(rng.choice([0.5, 1.0, 1.5, 2.0, 3.0])),
            value_marginal=parse_marginal(str(rng.choice(MARGINAL_NAMES)), "value"),
            weight_marginal=parse_marginal(str(rng.choice(MARGINAL_NAMES)), "weight"),
            seed=int(rng.integers(2**63)) if seed is None else seed,
        )
        try:
            return generate(gp)
        except ValueError:
            continue  # capacity below the smallest weight; draw again


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_gap():
    # two knapsacks, diagonal optimum 10 + 8
    return GapInstance([[10.0, 1.0], [1.0, 8.0]], [[3.0, 3.0], [3.0, 3.0]], [3.0, 3.0])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


# reproducible enumeration of every (i, j) choice, used by a few unit tests
def all_vectors(n, m):
    return itertools.product(range(-1, m), repeat=n)
