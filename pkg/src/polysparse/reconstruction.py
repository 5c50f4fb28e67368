"""Replay of the reconstruction argument on concrete realizations.

Given an instance, an active set ``R``, a query result and the canonical
optimum on ``R``, :func:`reconstruct` rebuilds the optimum bucket by bucket
(``opt_bar``) while building a feasible assignment ``alg`` from queried
active items only.  Every subroutine step is recorded with its weight and
value increments so that :func:`verify_lemmas` can check the feasibility
invariants per realization and the value inequalities in aggregate.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .instance import Assignment, GapInstance, item_set, knapsack_loads, restrict
from .sparsifier import QueryResult

SLACK = 1e-9

FILL_LARGE, FILL_SMALL, FILL_SUPER = "FillLarge", "FillSmall", "FillSuper"
CASES = (
    "DirectSub",
    "ValueRejection",
    "ValueSubstitution",
    "ExactSub",
    "DensitySub-1",
    "DensitySub-2",
    "SuperQueried",
    "SuperMissed",
)


class ReconstructionError(ValueError):
    """Inputs are inconsistent (e.g. the optimum uses an item outside R)."""


@dataclass
class CallRecord:
    subroutine: str
    j: int
    k: int
    case_label: str
    delta_w_alg: np.ndarray
    delta_w_opt: np.ndarray
    delta_v_alg: float = 0.0
    delta_v_opt: float = 0.0
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subroutine": self.subroutine,
            "j": self.j,
            "k": self.k,
            "case_label": self.case_label,
            "delta_w_alg": self.delta_w_alg.tolist(),
            "delta_w_opt": self.delta_w_opt.tolist(),
            "delta_v_alg": self.delta_v_alg,
            "delta_v_opt": self.delta_v_opt,
        }


@dataclass
class Partition:
    queried: dict  # (j, k) -> sorted OPT items queried via bucket (j, k)
    missed: dict  # (j, k) -> sorted OPT items at j in bucket k, never queried

    def items(self) -> list[int]:
        out = [i for v in self.queried.values() for i in v]
        out += [i for v in self.missed.values() for i in v]
        return sorted(out)


@dataclass
class ReconstructionTrace:
    calls: list
    final_alg: Assignment
    final_opt_bar: Assignment
    events: dict  # (j, k, t) -> bool
    partition: Partition
    active: np.ndarray
    query: QueryResult

    def to_dict(self) -> dict:
        return {
            "calls": [c.to_dict() for c in self.calls],
            "final_alg": [[i, j] for i, j in self.final_alg],
            "final_opt_bar": [[i, j] for i, j in self.final_opt_bar],
            "epsilon": self.query.epsilon,
            "events": [{"j": j, "k": k, "t": t, "holds": bool(h)} for (j, k, t), h in sorted(self.events.items())],
        }


def _origin(query: QueryResult, n: int) -> dict:
    """item -> (j, k, t) through which it was queried."""
    where = {}
    for key, items in query.buckets.items():
        for i in items:
            if not 0 <= i < n:
                raise ReconstructionError(f"bucket {key} lists item {i} outside the instance")
            if i in where:
                raise ReconstructionError(f"item {i} appears in buckets {where[i]} and {key}")
            where[i] = key
    q = set(int(i) for i in query.Q)
    if q != set(where):
        raise ReconstructionError("query set does not equal the union of its bucket lists")
    return where


def _check_query(inst: GapInstance, query: QueryResult):
    if query.boundaries.shape[0] != inst.m or query.boundaries.shape[1] != query.K + 1:
        raise ReconstructionError("bucket boundaries do not match this instance")


def partition_opt(inst: GapInstance, R, query: QueryResult, opt: Assignment) -> Partition:
    """Split the optimum's items into queried-via-(j,k) and missed-at-(j,k)."""
    _check_query(inst, query)
    active = set(int(i) for i in item_set(R, inst.n))
    where = _origin(query, inst.n)
    beta = query.bucket_of(inst)
    queried: dict = {}
    missed: dict = {}
    for i, jp in opt:
        if i not in active:
            raise ReconstructionError(f"optimum uses item {i}, which is not active")
        if i in where:
            j, k, _ = where[i]
            queried.setdefault((j, k), []).append(i)
        else:
            k = int(beta[i, jp])
            if k < 0:
                raise ReconstructionError(f"optimum pair ({i}, {jp}) fits in no bucket")
            missed.setdefault((jp, k), []).append(i)
    for d in (queried, missed):
        for key in d:
            d[key].sort()
    part = Partition(queried, missed)
    if part.items() != sorted(opt.items()):
        raise ReconstructionError("optimum items are not covered exactly once by the partition")
    return part


class _Builder:
    def __init__(self, inst: GapInstance, opt: Assignment, active_mask: np.ndarray):
        self.inst = inst
        self.v = inst.values
        self.w = inst.weights
        self.m = inst.m
        self.opt_of = opt.as_dict()  # item -> j'
        self.alg: dict = {}
        self.opt_bar: dict = {}
        self.calls: list = []
        self.active = active_mask
        self.cur: CallRecord | None = None

    def v_opt(self, i) -> float:
        j = self.opt_of.get(i)
        return 0.0 if j is None else float(self.v[i, j])

    def begin(self, sub, j, k, case, **info):
        self.cur = CallRecord(sub, j, k, case, np.zeros(self.m), np.zeros(self.m), info=info)
        self.calls.append(self.cur)

    def add_alg(self, i, j):
        if i in self.alg:
            raise ReconstructionError(f"item {i} added to ALG twice")
        self.alg[i] = j
        self.cur.delta_w_alg[j] += self.w[i, j]
        self.cur.delta_v_alg += float(self.v[i, j])

    def add_opt(self, i, j):
        if i in self.opt_bar:
            raise ReconstructionError(f"item {i} added to OPT-bar twice")
        self.opt_bar[i] = j
        self.cur.delta_w_opt[j] += self.w[i, j]
        self.cur.delta_v_opt += float(self.v[i, j])


def _active_bucket(query, j, k, t, active) -> list[int]:
    return [i for i in query.buckets.get((j, k, t), []) if active[i]]


def _fill_small(b: _Builder, query, part, j):
    k = 0
    queried = list(part.queried.get((j, k), []))
    missed = list(part.missed.get((j, k), []))
    if not queried and not missed:
        return
    if not missed:
        b.begin(FILL_SMALL, j, k, "ExactSub")
        for i in queried:
            b.add_opt(i, b.opt_of[i])
            b.add_alg(i, b.opt_of[i])
        return
    pool = [i for t in range(1, query.rounds + 1) for i in _active_bucket(query, j, k, t, b.active)]
    pool.sort(key=lambda i: (b.v_opt(i) / b.w[i, j], i))
    limit = sum(float(b.w[i, j]) for i in missed)
    prefix, load = [], 0.0
    stop = None
    for i in pool:
        if not b.v[i, j] > b.v_opt(i):
            stop = ("value", i)
            break
        if load + b.w[i, j] > limit:
            stop = ("weight", i)
            break
        prefix.append(i)
        load += float(b.w[i, j])
    case = "DensitySub-1" if stop is not None and stop[0] == "weight" else "DensitySub-2"
    in_s = set(prefix)
    rest = [i for i in pool if i not in in_s]
    b.begin(FILL_SMALL, j, k, case, prefix=prefix, rest=rest, missed=missed)
    for i in queried:
        jp = b.opt_of[i]
        b.add_opt(i, jp)
        if i in in_s:
            b.add_alg(i, j)
            in_s.discard(i)
        else:
            b.add_alg(i, jp)
    for i in prefix:
        if i in in_s:
            b.add_alg(i, j)
    for i in missed:
        b.add_opt(i, j)


def _fill_large(b: _Builder, query, part, j, k):
    queried = set(part.queried.get((j, k), []))
    missed = list(part.missed.get((j, k), []))
    if not queried and not missed:
        return
    rounds = range(1, query.rounds + 1)
    pool = [i for t in rounds for i in _active_bucket(query, j, k, t, b.active)]
    for i in sorted(missed):
        spare = [x for x in pool if x not in b.opt_of and x not in b.alg]
        if spare:
            sub = min(spare, key=lambda x: (b.w[x, j], x))
            b.begin(FILL_LARGE, j, k, "DirectSub", missed_item=i, substitute=sub)
            b.add_opt(i, j)
            b.add_alg(sub, j)
            continue
        picks = []  # (t, item)
        for t in rounds:
            cands = [x for x in _active_bucket(query, j, k, t, b.active) if x in b.opt_of and x not in b.alg]
            if cands:
                picks.append((t, min(cands)))
        v_i = b.v_opt(i)
        if picks:
            t_star, star = min(picks, key=lambda p: (b.v_opt(p[1]), p[0]))
            reject = b.v_opt(star) >= v_i
        else:
            star, reject = None, True
        b.begin(
            FILL_LARGE, j, k, "ValueRejection" if reject else "ValueSubstitution",
            missed_item=i, bundle=[x for _, x in picks],
        )
        for _, x in picks:
            if reject or x != star:
                b.add_alg(x, b.opt_of[x])
            else:
                b.add_alg(x, j)
        for _, x in picks:
            b.add_opt(x, b.opt_of[x])
            queried.discard(x)
        b.add_opt(i, j)
    if queried:
        b.begin(FILL_LARGE, j, k, "ExactSub")
        for i in sorted(queried):
            b.add_opt(i, b.opt_of[i])
            b.add_alg(i, b.opt_of[i])


def _fill_super(b: _Builder, part, K):
    k = K + 1
    for j in range(b.m):
        queried = part.queried.get((j, k), [])
        missed = part.missed.get((j, k), [])
        if queried:
            b.begin(FILL_SUPER, j, k, "SuperQueried")
            for i in queried:
                b.add_opt(i, b.opt_of[i])
                b.add_alg(i, b.opt_of[i])
        if missed:
            b.begin(FILL_SUPER, j, k, "SuperMissed")
            for i in missed:
                b.add_opt(i, j)


def excess_events(inst: GapInstance, query: QueryResult, active: np.ndarray) -> dict:
    """``(j, k, t) -> [active queried weight through (j, k, t) >= C_j]``."""
    out = {}
    for (j, k, t), items in query.buckets.items():
        load = sum(float(inst.weights[i, j]) for i in items if active[i])
        out[(j, k, t)] = load >= inst.capacities[j]
    return out


def reconstruct(
    inst: GapInstance, R, query: QueryResult, opt: Assignment, epsilon: float | None = None
) -> ReconstructionTrace:
    """Run the bucket-by-bucket reconstruction on one realization.

    ``query`` supplies Q, the bucket lists and the bucket boundaries (the
    latter place missed items).  ``epsilon`` defaults to the query's own.
    Calls that touch no item are not recorded.
    """
    if epsilon is not None and not math.isclose(epsilon, query.epsilon):
        raise ReconstructionError(f"epsilon {epsilon} differs from the query's {query.epsilon}")
    part = partition_opt(inst, R, query, opt)
    active = np.zeros(inst.n, dtype=bool)
    active[item_set(R, inst.n)] = True
    b = _Builder(inst, opt, active)
    for j in range(inst.m):
        _fill_small(b, query, part, j)
        for k in range(1, query.K + 1):
            _fill_large(b, query, part, j, k)
    if query.has_super_bucket:
        _fill_super(b, part, query.K)
    return ReconstructionTrace(
        b.calls,
        Assignment(tuple(b.alg.items())),
        Assignment(tuple(b.opt_bar.items())),
        excess_events(inst, query, active),
        part,
        active,
        query,
    )


# -- verification -------------------------------------------------------------------

SAMPLE_KEYS = (
    "large_alg", "large_opt", "small_alg", "small_opt", "super_alg", "super_opt",
    "opt_value", "small_slack",
)


@dataclass
class LemmaReport:
    epsilon: float
    realizations: int = 0
    checks: Counter = field(default_factory=Counter)
    violations: list = field(default_factory=list)
    cases: Counter = field(default_factory=Counter)
    samples: dict = field(default_factory=lambda: {k: [] for k in SAMPLE_KEYS})
    flags: set = field(default_factory=set)

    @property
    def violation_counts(self) -> Counter:
        return Counter(v["check"] for v in self.violations)

    def merge(self, other: "LemmaReport") -> "LemmaReport":
        out = LemmaReport(self.epsilon, self.realizations + other.realizations)
        out.checks = self.checks + other.checks
        out.violations = self.violations + other.violations
        out.cases = self.cases + other.cases
        out.samples = {k: self.samples[k] + other.samples[k] for k in SAMPLE_KEYS}
        out.flags = self.flags | other.flags
        return out

    def _stat(self, diff: np.ndarray) -> dict:
        n = diff.size
        mean = float(diff.mean()) if n else math.nan
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return {"mean": mean, "stderr": se, "margin": mean + 3 * se, "holds": bool(n and mean + 3 * se >= -SLACK)}

    def value_margins(self) -> dict:
        """Aggregate value inequalities as ``mean + 3 stderr >= 0`` tests."""
        s = {k: np.asarray(v, dtype=np.float64) for k, v in self.samples.items()}
        e = self.epsilon
        return {
            "large_value": self._stat(s["large_alg"] - (1 - 2 * e) * s["large_opt"]),
            "small_value": self._stat(s["small_alg"] - (1 - 2 * e) * s["small_opt"] + s["small_slack"]),
            "super_loss": self._stat(3 * e * s["opt_value"] - (s["super_opt"] - s["super_alg"])),
        }

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "realizations": self.realizations,
            "checks": dict(self.checks),
            "violation_counts": dict(self.violation_counts),
            "violations": self.violations[:100],
            "cases": dict(self.cases),
            "flags": sorted(self.flags),
            "value_margins": self.value_margins(),
        }


def verify_lemmas(
    trace: ReconstructionTrace,
    inst: GapInstance,
    opt: Assignment,
    M,
    epsilon: float,
    m_estimated: bool = False,
) -> LemmaReport:
    """Per-realization invariant checks plus samples for the value lemmas.

    ``M`` gives the per-knapsack scales used in the small-bucket slack
    ``epsilon^2 * sum_j M_j``.  Pass ``m_estimated=True`` when they come
    from sampling rather than the exact expected optimum; the report then
    carries the ``sampled_scale`` flag.
    """
    rep = LemmaReport(epsilon, 1)
    if m_estimated:
        rep.flags.add("sampled_scale")
    M = np.broadcast_to(np.asarray(M, dtype=np.float64), (inst.m,))

    def fail(check, **ctx):
        rep.violations.append({"check": check, **ctx})

    query = trace.query
    q_and_r = set(int(i) for i in query.Q if trace.active[i])

    # (a) ALG uses queried active items, each once
    rep.checks["alg_in_query"] += 1
    items = trace.final_alg.items()
    if len(set(items)) != len(items) or not set(items) <= q_and_r:
        fail("alg_in_query", alg=items)

    # (b) per-call weight domination
    for c in trace.calls:
        rep.cases[c.case_label] += 1
        rep.checks["weight_domination"] += 1
        if np.any(c.delta_w_alg > c.delta_w_opt + SLACK):
            fail("weight_domination", call=c.to_dict())

    # (c) final feasibility and totals
    rep.checks["feasibility"] += 1
    loads = knapsack_loads(inst, trace.final_alg) if len(trace.final_alg) else np.zeros(inst.m)
    total = np.sum([c.delta_w_alg for c in trace.calls], axis=0) if trace.calls else np.zeros(inst.m)
    opt_loads = knapsack_loads(inst, opt) if len(opt) else np.zeros(inst.m)
    if np.any(loads > inst.capacities + SLACK) or np.any(np.abs(total - loads) > SLACK * max(1.0, loads.max(initial=0))):
        fail("feasibility", loads=loads.tolist())
    if np.any(loads > opt_loads + SLACK * max(1.0, opt_loads.max(initial=0))):
        fail("feasibility", loads=loads.tolist(), opt_loads=opt_loads.tolist())

    # (d) OPT-bar equals OPT
    rep.checks["opt_bar_equals_opt"] += 1
    if trace.final_opt_bar.pairs != opt.pairs:
        fail("opt_bar_equals_opt")

    v, w = inst.values, inst.weights
    opt_of = opt.as_dict()

    def v_opt(i):
        jp = opt_of.get(i)
        return 0.0 if jp is None else float(v[i, jp])

    # (e) ratio ordering of the density prefix
    for c in trace.calls:
        if not c.case_label.startswith("DensitySub"):
            continue
        rep.checks["density_ordering"] += 1
        j = c.j
        S, rest = c.info["prefix"], c.info["rest"]
        ok = all(v_opt(i) / w[i, j] <= v[i, j] / w[i, j] for i in S)
        if S and rest:
            ok &= max(v_opt(i) / w[i, j] for i in S) <= min(v_opt(i) / w[i, j] for i in rest)
        if not ok:
            fail("density_ordering", call=c.to_dict())

    # (f) missed-item properties whenever the excess-weight event holds
    for (j, k), missed in trace.partition.missed.items():
        pool = [
            i for t in range(1, query.rounds + 1)
            for i in query.buckets.get((j, k, t), []) if trace.active[i]
        ]
        for t in range(1, query.rounds + 1):
            if not trace.events.get((j, k, t), False):
                continue
            rep.checks["missed_properties"] += 1
            bar = [i for i in query.buckets.get((j, k, t), []) if trace.active[i]]
            ok = sum(float(w[i, j]) for i in bar) >= inst.capacities[j]
            if k == 0:
                ok &= all(v[a, j] / w[a, j] >= v[i, j] / w[i, j] for a in pool for i in missed)
            else:
                ok &= all(w[a, j] <= w[i, j] for a in pool for i in missed)
                ok &= len(bar) >= len(missed)
            if not ok:
                fail("missed_properties", j=j, k=k, t=t, missed=missed, bucket=bar)

    # value-lemma samples
    s = rep.samples
    for key in SAMPLE_KEYS:
        s[key].append(0.0)
    for c in trace.calls:
        tag = {FILL_LARGE: "large", FILL_SMALL: "small", FILL_SUPER: "super"}[c.subroutine]
        s[f"{tag}_alg"][-1] += c.delta_v_alg
        s[f"{tag}_opt"][-1] += c.delta_v_opt
    s["opt_value"][-1] = float(sum(v[i, j] for i, j in opt))
    s["small_slack"][-1] = float(epsilon**2 * M.sum())
    return rep


def verify_realizations(
    inst: GapInstance,
    query: QueryResult,
    p: float,
    trials: int = 100,
    seed: int = 0,
    m_estimated: bool | None = None,
) -> LemmaReport:
    """Sample ``trials`` active sets, reconstruct each and merge the reports."""
    from .solvers.expected import solve_exact
    from .stochastic import realization_seeds, sample_active

    if m_estimated is None:
        m_estimated = query.info.get("oracle", {}).get("mode") == "sampled"
    rep = LemmaReport(query.epsilon)
    for s in realization_seeds(seed, trials):
        active = sample_active(inst.n, p, s).included
        sub, idx = restrict(inst, active)
        opt = solve_exact(sub, canonical=True).assignment.remap(idx)
        trace = reconstruct(inst, active, query, opt)
        rep = rep.merge(verify_lemmas(trace, inst, opt, query.M, query.epsilon, m_estimated))
    return rep
