"""Bucket-based query-set sparsifiers for knapsack and GAP.

Items are bucketed per knapsack on a geometric value grid anchored at a scale
``M_j``.  Inside each bucket the sparsifier queries a prefix whose weight
just reaches ``tau * C_j / p`` (lightest first for valuable buckets, densest
first for the low-value bucket), so that either the whole bucket is queried
or, with high probability, the active queried items alone can fill the
knapsack.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .instance import GapInstance, restrict
from .solvers.expected import expected_opt, solve_exact
from .solvers.simplex import gap_lp

KP_THEORY_RANGE = (0.0, 1.0 / 3.0)
GAP_THEORY_RANGE = (0.0, 1.0 / 6.0)


def tau(epsilon: float) -> float:
    """Concentration factor ``1 + L + sqrt(L^2 + 2L)`` with ``L = ln(1/eps)``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if epsilon > 1:
        raise ValueError(f"epsilon must be <= 1, got {epsilon}")
    L = math.log(1.0 / epsilon)
    return 1.0 + L + math.sqrt(L * L + 2.0 * L)


def kp_bucket_count(epsilon: float, p: float) -> int:
    return max(1, math.ceil(math.log(1.0 / (epsilon * p)) / epsilon))


def gap_bucket_count(epsilon: float, m: int = 1, global_oracle: bool = False) -> int:
    scale = m if global_oracle else 1
    return max(1, math.ceil(2.0 / epsilon**2 * math.log(scale / epsilon**3)))


def lp_driven_bucket_count(epsilon: float) -> int:
    return max(1, math.ceil(math.log(1.0 / epsilon**2) / epsilon**2))


# -- oracle modes -----------------------------------------------------------------


@dataclass(frozen=True)
class PerKnapsack:
    """Known expected per-knapsack optima ``M_j``."""

    values: tuple

    def __init__(self, values):
        object.__setattr__(self, "values", tuple(float(x) for x in np.atleast_1d(values)))


@dataclass(frozen=True)
class Global:
    """Known expected total optimum; spread evenly as ``M_j = M / m``."""

    value: float


@dataclass(frozen=True)
class LpDriven:
    """Every ``M_j`` is the LP optimum of the full instance."""

    value: float | None = None  # cached LP value, computed on demand if None


@dataclass(frozen=True)
class Sampled:
    """Estimate ``M_j`` by Monte Carlo over active sets."""

    trials: int = 200
    seed: int = 0


Oracle = PerKnapsack | Global | LpDriven | Sampled


def oracle_to_dict(o: Oracle) -> dict:
    if isinstance(o, PerKnapsack):
        return {"mode": "per", "values": list(o.values)}
    if isinstance(o, Global):
        return {"mode": "global", "value": o.value}
    if isinstance(o, LpDriven):
        return {"mode": "lp", "value": o.value}
    return {"mode": "sampled", "trials": o.trials, "seed": o.seed}


def oracle_from_dict(d: dict) -> Oracle:
    mode = d["mode"]
    if mode == "per":
        return PerKnapsack(d["values"])
    if mode == "global":
        return Global(float(d["value"]))
    if mode == "lp":
        return LpDriven(d.get("value"))
    if mode == "sampled":
        return Sampled(int(d.get("trials", 200)), int(d.get("seed", 0)))
    raise ValueError(f"unknown oracle mode {mode!r}")


@dataclass(frozen=True)
class SparsifyParams:
    epsilon: float
    p: float = 1.0
    oracle: Oracle = field(default_factory=LpDriven)
    mode: str = "theory"  # or "practical"
    rounds_alpha: int | None = None
    tau_override: float | None = None
    K_override: int | None = None

    def __post_init__(self):
        if self.mode not in ("theory", "practical"):
            raise ValueError(f"mode must be 'theory' or 'practical', got {self.mode!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        overrides = (self.rounds_alpha, self.tau_override, self.K_override)
        if self.mode == "theory" and any(x is not None for x in overrides):
            raise ValueError("tau/alpha/K overrides require mode='practical'")
        for name, x in zip(("rounds_alpha", "tau_override", "K_override"), overrides):
            if x is not None and not x > 0:
                raise ValueError(f"{name} must be positive, got {x}")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "p": self.p,
            "oracle": oracle_to_dict(self.oracle),
            "mode": self.mode,
            "rounds_alpha": self.rounds_alpha,
            "tau_override": self.tau_override,
            "K_override": self.K_override,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparsifyParams":
        d = dict(d)
        d["oracle"] = oracle_from_dict(d["oracle"])
        return cls(**d)


def lp_driven_params(inst: GapInstance, epsilon: float = 0.2) -> SparsifyParams:
    """Deterministic-regime settings: p = 1, one pass, tau = 1, M_j = LP optimum."""
    lp = gap_lp(inst)
    return SparsifyParams(
        epsilon=epsilon,
        p=1.0,
        oracle=LpDriven(lp.value),
        mode="practical",
        rounds_alpha=1,
        tau_override=1.0,
        K_override=lp_driven_bucket_count(epsilon),
    )


# -- query result -------------------------------------------------------------------


@dataclass
class QueryResult:
    Q: np.ndarray
    buckets: dict  # (j, k, t) -> list of items in selection order
    ledger: np.ndarray  # selected weight per knapsack
    lp_degree_bound: float
    integral_degree_bound: float
    boundaries: np.ndarray  # m x (K+1) upper edges of buckets 0..K
    M: np.ndarray
    epsilon: float
    p: float
    K: int
    tau: float
    rounds: int  # passes actually executed
    alpha: int  # round parameter as in the degree bound
    kind: str  # "kp" or "gap"
    info: dict = field(default_factory=dict)

    @property
    def has_super_bucket(self) -> bool:
        return self.kind == "gap"

    def bucket_of(self, inst: GapInstance) -> np.ndarray:
        """``beta[i, j]``; -1 for pairs that cannot fit their knapsack."""
        return bucket_indices(inst, self.boundaries, self.has_super_bucket)

    def interval(self, j: int, k: int) -> tuple[float, float]:
        b = self.boundaries[j]
        if k == 0:
            return (-math.inf, float(b[0]))
        if k <= self.K:
            return (float(b[k - 1]), float(b[k]))
        return (float(b[self.K]), math.inf)

    def degree_cap(self) -> float:
        """Worst-case ``ledger_j / C_j`` from the bucket budgets actually used."""
        n_buckets = self.K + 2 if self.has_super_bucket else self.K + 1
        return self.rounds * n_buckets * (self.tau / self.p + 1.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "Q": [int(i) for i in self.Q],
            "buckets": [
                {"j": j, "k": k, "t": t, "items": [int(i) for i in items]}
                for (j, k, t), items in sorted(self.buckets.items())
            ],
            "ledger": [float(x) for x in self.ledger],
            "lp_degree_bound": self.lp_degree_bound,
            "integral_degree_bound": self.integral_degree_bound,
            "boundaries": [[float(x) for x in row] for row in self.boundaries],
            "M": [float(x) for x in self.M],
            "epsilon": self.epsilon,
            "p": self.p,
            "K": self.K,
            "tau": self.tau,
            "rounds": self.rounds,
            "alpha": self.alpha,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryResult":
        buckets = {(b["j"], b["k"], b["t"]): list(b["items"]) for b in d["buckets"]}
        return cls(
            Q=np.asarray(d["Q"], dtype=np.int64),
            buckets=buckets,
            ledger=np.asarray(d["ledger"], dtype=np.float64),
            lp_degree_bound=float(d["lp_degree_bound"]),
            integral_degree_bound=float(d["integral_degree_bound"]),
            boundaries=np.asarray(d["boundaries"], dtype=np.float64),
            M=np.asarray(d["M"], dtype=np.float64),
            epsilon=float(d["epsilon"]),
            p=float(d["p"]),
            K=int(d["K"]),
            tau=float(d["tau"]),
            rounds=int(d["rounds"]),
            alpha=int(d["alpha"]),
            kind=d["kind"],
            info=d.get("info", {}),
        )


# -- buckets ----------------------------------------------------------------------


def geometric_boundaries(base: float, ratio_minus_one: float, K: int) -> np.ndarray:
    """``base * (1 + r)^k`` for ``k = 0..K``, evaluated in log space."""
    k = np.arange(K + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.exp(math.log(base) + k * math.log1p(ratio_minus_one))


def bucket_indices(inst: GapInstance, boundaries: np.ndarray, super_bucket: bool = True) -> np.ndarray:
    """Bucket index per pair from the upper edges ``boundaries[j]``.

    ``v <= b_0`` gives 0, ``b_{k-1} < v <= b_k`` gives k, and ``v > b_K``
    gives ``K + 1`` (the super bucket) or ``K`` when there is none.
    """
    n, m = inst.n, inst.m
    beta = np.empty((n, m), dtype=np.int64)
    K = boundaries.shape[1] - 1
    for j in range(m):
        beta[:, j] = np.searchsorted(boundaries[j], inst.values[:, j], side="left")
    if not super_bucket:
        np.minimum(beta, K, out=beta)
    beta[inst.weights > inst.capacities[None, :]] = -1
    return beta


def _check_scale(M: np.ndarray):
    if np.any(~np.isfinite(M)) or np.any(M <= 0):
        raise ValueError(f"value scale M must be finite and > 0, got {M.tolist()}")


def _theory_range_warning(epsilon: float, rng: tuple, what: str):
    lo, hi = rng
    if not lo < epsilon < hi:
        warnings.warn(
            f"epsilon={epsilon} lies outside the guaranteed range ({lo}, {hi:.4g}) for {what}",
            stacklevel=3,
        )


def sampled_scales(inst: GapInstance, p: float, trials: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``E[OPT_j]`` via the canonical optimum's per-knapsack split."""
    from .stochastic import realization_seeds, sample_active

    per = np.zeros((trials, inst.m))
    for t, s in enumerate(realization_seeds(seed, 1 if p == 1 else trials)):
        active = sample_active(inst.n, p, s).included
        sub, idx = restrict(inst, active)
        res = solve_exact(sub, canonical=True)
        for i, j in res.assignment:
            per[t, j] += sub.values[i, j]
    if p == 1:
        per = per[:1]
    se = per.std(axis=0, ddof=1) / math.sqrt(per.shape[0]) if per.shape[0] > 1 else np.zeros(inst.m)
    return per.mean(axis=0), se


def _resolve_scales(inst: GapInstance, params: SparsifyParams) -> tuple[np.ndarray, dict]:
    o = params.oracle
    m = inst.m
    info: dict = {"oracle": oracle_to_dict(o)}
    if isinstance(o, PerKnapsack):
        if len(o.values) != m:
            raise ValueError(f"PerKnapsack oracle needs {m} values, got {len(o.values)}")
        M = np.asarray(o.values, dtype=np.float64)
    elif isinstance(o, Global):
        M = np.full(m, float(o.value) / m)
    elif isinstance(o, LpDriven):
        value = o.value if o.value is not None else gap_lp(inst).value
        M = np.full(m, float(value))
        info["lp_value"] = float(value)
    else:
        if m == 1:
            est = expected_opt(inst, params.p, o.trials, o.seed)
            M, se = np.array([est.mean]), np.array([est.stderr])
        else:
            M, se = sampled_scales(inst, params.p, o.trials, o.seed)
        info["scale_stderr"] = [float(x) for x in se]
        # a knapsack the sampled optimum never uses would get M_j = 0; give it
        # a tiny positive scale so every pair lands in a high bucket
        floor = 1e-12 * max(1.0, float(M.sum()))
        if np.any(M <= floor):
            info["floored_scales"] = [int(j) for j in np.flatnonzero(M <= floor)]
            M = np.maximum(M, floor)
    _check_scale(M)
    info["M"] = [float(x) for x in M]
    return M, info


# -- knapsack sparsifier ------------------------------------------------------------


def sparsify_kp(inst: GapInstance, params: SparsifyParams) -> QueryResult:
    """Bucket sparsifier for a single knapsack."""
    if inst.m != 1:
        raise ValueError("sparsify_kp needs a single-knapsack instance")
    eps, p = params.epsilon, params.p
    if params.mode == "theory":
        _theory_range_warning(eps, KP_THEORY_RANGE, "knapsack")
    M, info = _resolve_scales(inst, params)
    K = params.K_override or kp_bucket_count(eps, p)
    t_val = params.tau_override if params.tau_override is not None else tau(eps)
    C = float(inst.capacities[0])
    threshold = t_val * C / p
    boundaries = geometric_boundaries(eps * M[0], eps, K)[None, :]
    beta = bucket_indices(inst, boundaries, super_bucket=False)[:, 0]
    v, w = inst.values[:, 0], inst.weights[:, 0]
    above = int(np.count_nonzero(v > boundaries[0, K]))
    if above:
        info["clamped_to_top_bucket"] = above

    buckets = {}
    chosen = []
    for k in range(K + 1):
        members = np.flatnonzero(beta == k)
        if k == 0:
            key = -v[members] / w[members]
        else:
            key = w[members]
        members = members[np.argsort(key, kind="stable")]
        total = 0.0
        sel = []
        for i in members:
            if total >= threshold:
                break
            sel.append(int(i))
            total += w[i]
        if sel:
            buckets[(0, k, 1)] = sel
            chosen.extend(sel)
    Q = np.array(sorted(chosen), dtype=np.int64)
    wq = float(w[Q].sum()) if Q.size else 0.0
    lp_deg = max(1.0, wq / C)
    return QueryResult(
        Q, buckets, np.array([wq]), lp_deg, 2.0 * lp_deg, boundaries, M, eps, p, K,
        t_val, 1, 1, "kp", info,
    )


# -- GAP sparsifier -----------------------------------------------------------------


def sparsify_gap(inst: GapInstance, params: SparsifyParams) -> QueryResult:
    """Multi-round bucket sparsifier for GAP (and MKP).

    Each round resets every bucket budget to ``tau(eps^2) C_j / p``, then
    selects unqueried pairs from buckets ``k >= 1`` lightest first across
    all knapsacks, then from bucket 0 densest first.  A pair stays selectable
    while its bucket budget is strictly positive.
    """
    eps, p = params.epsilon, params.p
    n, m = inst.n, inst.m
    if params.mode == "theory":
        _theory_range_warning(eps, GAP_THEORY_RANGE, "GAP")
    M, info = _resolve_scales(inst, params)
    global_oracle = isinstance(params.oracle, Global)
    K = params.K_override or gap_bucket_count(eps, m, global_oracle)
    t_val = params.tau_override if params.tau_override is not None else tau(eps * eps)
    alpha = math.ceil(1.0 / eps - 1e-12)
    if params.mode == "theory":
        rounds = alpha - 1
    else:
        rounds = params.rounds_alpha if params.rounds_alpha is not None else alpha - 1
        alpha = rounds if params.rounds_alpha is not None else alpha
    rounds = max(rounds, 1)

    boundaries = np.vstack([geometric_boundaries(eps * eps * M[j], eps * eps, K) for j in range(m)])
    beta = bucket_indices(inst, boundaries, super_bucket=True)
    v, w, C = inst.values, inst.weights, inst.capacities
    valid = beta >= 0

    # one global order per phase; a linear scan then reproduces the
    # "pick the best currently valid pair" loop because validity only shrinks
    large = np.argwhere(valid & (beta >= 1))
    small = np.argwhere(valid & (beta == 0))
    li, lj = large[:, 0], large[:, 1]
    large = large[np.lexsort((lj, li, w[li, lj]))]
    si, sj = small[:, 0], small[:, 1]
    small = small[np.lexsort((sj, si, -(v[si, sj] / w[si, sj])))]
    large_l = [(int(i), int(j)) for i, j in large]
    small_l = [(int(i), int(j)) for i, j in small]
    beta_l = beta.tolist()
    w_l = w.tolist()

    budget0 = [t_val * float(C[j]) / p for j in range(m)]
    in_q = [False] * n
    buckets: dict = {}
    ledger = [0.0] * m
    for t in range(1, rounds + 1):
        b = [[budget0[j]] * (K + 2) for j in range(m)]
        for phase in (large_l, small_l):
            for i, j in phase:
                if in_q[i]:
                    continue
                k = beta_l[i][j]
                if b[j][k] > 0:
                    in_q[i] = True
                    b[j][k] -= w_l[i][j]
                    ledger[j] += w_l[i][j]
                    buckets.setdefault((j, k, t), []).append(i)
    Q = np.flatnonzero(np.array(in_q, dtype=bool)) if n else np.zeros(0, dtype=np.int64)
    ledger_a = np.asarray(ledger)
    lp_deg = max(1.0, float(np.max(ledger_a / C))) if m else 1.0
    return QueryResult(
        Q.astype(np.int64), buckets, ledger_a, lp_deg, 2.0 * lp_deg, boundaries, M, eps, p, K,
        t_val, rounds, alpha, "gap", info,
    )


def sparsify(inst: GapInstance, params: SparsifyParams, algorithm: str = "auto") -> QueryResult:
    """``kp`` for single-knapsack instances under ``auto``, ``gap`` otherwise."""
    if algorithm == "auto":
        algorithm = "kp" if inst.kind == "kp" else "gap"
    if algorithm == "kp":
        return sparsify_kp(inst, params)
    if algorithm == "gap":
        return sparsify_gap(inst, params)
    raise ValueError(f"unknown algorithm {algorithm!r}")
