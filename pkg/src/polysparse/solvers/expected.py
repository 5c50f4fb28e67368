"""Monte Carlo estimate of the expected optimum over random active sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..instance import GapInstance, restrict
from .bnb import gap_exact
from .common import Budget, SolveResult, Status
from .knapsack import kp_exact


def solve_exact(inst: GapInstance, budget: Budget | None = None, canonical: bool = True) -> SolveResult:
    """Dispatch to the knapsack DP when the instance allows it, else GAP B&B."""
    if inst.m == 1 and inst.n > 0 and inst.integer_weights:
        return kp_exact(inst.values[:, 0], inst.weights[:, 0], inst.capacities[0], budget, canonical)
    return gap_exact(inst, budget, canonical=canonical)


@dataclass
class ExpectedOpt:
    mean: float
    stderr: float
    completed: int
    flagged: int  # realizations whose solve hit the budget

    def __iter__(self):
        # allows ``mean, se = expected_opt(...)``
        return iter((self.mean, self.stderr))


def expected_opt(
    inst: GapInstance,
    p: float,
    trials: int = 200,
    seed: int = 0,
    budget: Budget | None = None,
) -> ExpectedOpt:
    """Sample mean and standard error of OPT(R) over ``trials`` active sets."""
    from ..stochastic import sample_active

    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if p == 1:
        res = solve_exact(inst, budget)
        ok = res.status is not Status.BUDGET_EXCEEDED
        return ExpectedOpt(res.value if ok else math.nan, 0.0, int(ok), int(not ok))
    vals = []
    flagged = 0
    seeds = np.random.SeedSequence(seed).generate_state(trials, np.uint64)
    for s in seeds:
        active = sample_active(inst.n, p, int(s))
        sub, _ = restrict(inst, active.included)
        res = solve_exact(sub, budget, canonical=False)
        if res.status is Status.BUDGET_EXCEEDED:
            flagged += 1
            continue
        vals.append(res.value)
    if not vals:
        return ExpectedOpt(math.nan, math.nan, 0, flagged)
    arr = np.asarray(vals)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return ExpectedOpt(float(arr.mean()), se, arr.size, flagged)
