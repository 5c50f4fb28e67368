"""Active-set sampling and Monte Carlo evaluation of query sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import GapInstance, item_set, restrict
from .solvers.common import Budget, Status
from .solvers.expected import solve_exact


@dataclass(frozen=True)
class ActiveSet:
    included: np.ndarray
    p: float
    seed: int

    def __len__(self):
        return int(self.included.size)


def sample_active(n: int, p: float, seed: int) -> ActiveSet:
    """Each of ``n`` items is active independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if p == 1:
        idx = np.arange(n)
    else:
        idx = np.flatnonzero(np.random.default_rng(seed).random(n) < p)
    return ActiveSet(idx, p, seed)


def realization_seeds(seed: int, trials: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(trials, np.uint64)]


def activation_probability(weights, threshold: float, p: float, trials: int = 20000, seed: int = 0) -> float:
    """Fraction of random activations whose active weight reaches ``threshold``."""
    w = np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(seed)
    hits = 0
    # chunked to keep the boolean matrix small
    chunk = max(1, min(trials, 2_000_000 // max(1, w.size)))
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        active = rng.random((k, w.size)) < p
        hits += int(np.count_nonzero(active @ w >= threshold))
        done += k
    return hits / trials


@dataclass
class EvalResult:
    ratio: float
    ratio_stderr: float
    numerator_mean: float
    numerator_stderr: float
    denominator_mean: float
    denominator_stderr: float
    completed: int
    flagged: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def eval_sparsifier(
    inst: GapInstance,
    Q,
    p: float,
    trials: int = 500,
    seed: int = 0,
    budget: Budget | None = None,
) -> EvalResult:
    """Estimate ``E[OPT(Q and R)] / E[OPT(R)]`` with common random numbers.

    The same realization ``R`` feeds numerator and denominator; the ratio of
    means gets a delta-method standard error from the paired samples.
    Realizations whose solves exceed ``budget`` are dropped and counted.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q_mask = np.zeros(inst.n, dtype=bool)
    q_mask[item_set(Q, inst.n)] = True
    # with p = 1 every realization is the full item set
    seeds = realization_seeds(seed, 1 if p == 1 else trials)
    num, den = [], []
    flagged = 0
    for s in seeds:
        active = sample_active(inst.n, p, s).included
        sub, _ = restrict(inst, active)
        d = solve_exact(sub, budget, canonical=False)
        kept = active[q_mask[active]]
        if kept.size == active.size:
            nres = d
        else:
            nres = solve_exact(restrict(inst, kept)[0], budget, canonical=False)
        if Status.BUDGET_EXCEEDED in (d.status, nres.status):
            flagged += 1
            continue
        num.append(nres.value)
        den.append(d.value)
    if not den:
        nan = math.nan
        return EvalResult(nan, nan, nan, nan, nan, nan, 0, flagged)
    N, D = np.asarray(num), np.asarray(den)
    nm, dm = float(N.mean()), float(D.mean())
    if dm > 0:
        ratio = nm / dm
        ratio_se = _se(N - ratio * D) / dm
    else:
        ratio, ratio_se = 1.0, 0.0
    return EvalResult(ratio, ratio_se, nm, _se(N), dm, _se(D), N.size, flagged)
