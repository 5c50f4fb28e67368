import numpy as np
import pytest
from conftest import random_small_gap
from hypothesis import given, settings
from hypothesis import strategies as st

from polysparse.instance import Assignment, GapInstance, restrict, validate_assignment
from polysparse.reconstruction import (
    CASES,
    LemmaReport,
    ReconstructionError,
    excess_events,
    partition_opt,
    reconstruct,
    verify_lemmas,
    verify_realizations,
)
from polysparse.solvers import solve_exact
from polysparse.sparsifier import PerKnapsack, QueryResult, Sampled, SparsifyParams, sparsify_gap
from polysparse.stochastic import sample_active


def hand_query(inst, buckets, bounds, K, kind, eps=0.2):
    Q = np.array(sorted(i for v in buckets.values() for i in v), dtype=int)
    return QueryResult(
        Q, buckets, np.zeros(inst.m), 0.0, 0.0, np.array(bounds, float),
        np.ones(inst.m), eps, 0.5, K, 1.0, 1, 1, kind,
    )


def opt_on(inst, active):
    sub, idx = restrict(inst, active)
    return solve_exact(sub).assignment.remap(idx)


def crowded_case(rng):
    """Small budgets relative to the bucket contents so that misses happen."""
    n, m = int(rng.integers(5, 41)), int(rng.integers(1, 4))
    inst = GapInstance(rng.uniform(1, 10, (n, m)), rng.uniform(1, 10, (n, m)), rng.uniform(10, 25, m))
    params = SparsifyParams(
        0.5, 0.5, PerKnapsack(list(rng.uniform(8, 12, m))), mode="practical",
        rounds_alpha=int(rng.integers(1, 4)), tau_override=float(rng.uniform(0.05, 0.6)), K_override=6,
    )
    return inst, sparsify_gap(inst, params)


def low_value_case(rng):
    """Every pair lands in the low-value bucket, so the small-bucket path runs."""
    n, m = int(rng.integers(5, 25)), int(rng.integers(1, 3))
    inst = GapInstance(rng.uniform(0.5, 2.4, (n, m)), rng.uniform(1, 5, (n, m)), rng.uniform(8, 20, m))
    params = SparsifyParams(
        0.5, 0.5, PerKnapsack([10.0] * m), mode="practical",
        rounds_alpha=int(rng.integers(1, 3)), tau_override=float(rng.uniform(0.05, 0.8)), K_override=4,
    )
    return inst, sparsify_gap(inst, params)


class TestHandBuilt:
    def test_direct_substitution(self):
        # A = (10, 5) is missed, B = (9.9, 4) was queried from the same bucket
        inst = GapInstance.knapsack([10, 9.9], [5, 4], 5)
        qr = hand_query(inst, {(0, 1, 1): [1]}, [[1, 20]], 1, "kp")
        opt = Assignment([(0, 0)])
        tr = reconstruct(inst, np.array([0, 1]), qr, opt)
        (call,) = tr.calls
        assert call.case_label == "DirectSub"
        assert (call.delta_v_alg, call.delta_v_opt) == (9.9, 10.0)
        assert call.delta_w_alg[0] == 4 and call.delta_w_opt[0] == 5
        assert tr.final_alg.pairs == ((1, 0),)
        assert tr.final_opt_bar == opt

    def test_super_bucket_miss(self):
        inst = GapInstance([[100.0], [2.0]], [[1.0], [1.0]], [2.0])
        qr = hand_query(inst, {(0, 1, 1): [1]}, [[1, 5]], 1, "gap")
        opt = Assignment([(0, 0), (1, 0)])
        tr = reconstruct(inst, np.array([0, 1]), qr, opt)
        labels = [c.case_label for c in tr.calls]
        assert labels == ["ExactSub", "SuperMissed"]
        assert tr.final_alg.pairs == ((1, 0),)
        assert tr.final_opt_bar == opt
        rep = verify_lemmas(tr, inst, opt, [1.0], 0.2)
        assert not rep.violations

    def test_super_bucket_queried(self):
        inst = GapInstance([[100.0]], [[1.0]], [2.0])
        qr = hand_query(inst, {(0, 2, 1): [0]}, [[1, 5]], 1, "gap")
        tr = reconstruct(inst, np.array([0]), qr, Assignment([(0, 0)]))
        assert [c.case_label for c in tr.calls] == ["SuperQueried"]
        assert tr.final_alg == tr.final_opt_bar

    def test_excess_event(self):
        inst = GapInstance.knapsack([3, 3, 3], [2, 2, 2], 3)
        qr = hand_query(inst, {(0, 1, 1): [0, 1, 2]}, [[1, 20]], 1, "kp")
        assert excess_events(inst, qr, np.zeros(3, bool) | [True, True, False])[(0, 1, 1)]
        assert not excess_events(inst, qr, np.array([True, False, False]))[(0, 1, 1)]


class TestPartition:
    def test_opt_outside_active(self):
        inst = GapInstance.knapsack([1, 2], [1, 1], 5)
        qr = hand_query(inst, {(0, 1, 1): [0, 1]}, [[0.1, 20]], 1, "kp")
        with pytest.raises(ReconstructionError):
            partition_opt(inst, np.array([0]), qr, Assignment([(1, 0)]))

    def test_foreign_query(self, tiny_gap):
        inst = GapInstance.knapsack([1, 2], [1, 1], 5)
        qr = hand_query(inst, {(0, 1, 1): [0, 1]}, [[0.1, 20]], 1, "kp")
        with pytest.raises(ReconstructionError):
            reconstruct(tiny_gap, np.array([0, 1]), qr, Assignment([]))

    def test_inconsistent_buckets(self):
        inst = GapInstance.knapsack([1, 2], [1, 1], 5)
        qr = hand_query(inst, {(0, 1, 1): [0], (0, 1, 2): [0]}, [[0.1, 20]], 1, "kp")
        with pytest.raises(ReconstructionError):
            reconstruct(inst, np.array([0, 1]), qr, Assignment([]))

    def test_epsilon_mismatch(self):
        inst = GapInstance.knapsack([1, 2], [1, 1], 5)
        qr = hand_query(inst, {(0, 1, 1): [0, 1]}, [[0.1, 20]], 1, "kp")
        with pytest.raises(ReconstructionError):
            reconstruct(inst, np.array([0, 1]), qr, Assignment([(0, 0)]), epsilon=0.3)

    def test_cardinality(self, rng):
        for _ in range(30):
            inst, qr = crowded_case(rng)
            act = sample_active(inst.n, 0.5, int(rng.integers(1 << 30))).included
            opt = opt_on(inst, act)
            part = partition_opt(inst, act, qr, opt)
            assert part.items() == opt.items()


class TestRandomized:
    def test_every_label_and_no_violations(self, rng):
        rep = LemmaReport(0.5)
        for trial in range(200):
            inst, qr = (crowded_case if trial % 4 else low_value_case)(rng)
            for _ in range(2):
                act = sample_active(inst.n, 0.5, int(rng.integers(1 << 30))).included
                opt = opt_on(inst, act)
                tr = reconstruct(inst, act, qr, opt)
                assert validate_assignment(inst, tr.final_alg)
                rep = rep.merge(verify_lemmas(tr, inst, opt, qr.M, 0.5))
        assert rep.violations == []
        assert set(rep.cases) == set(CASES)
        assert rep.checks["density_ordering"] > 0 and rep.checks["missed_properties"] > 0

    def test_no_misses_means_exact(self, rng):
        inst = random_small_gap(rng, n_max=10, seed=3)
        qr = sparsify_gap(inst, SparsifyParams(0.2, 1.0, PerKnapsack([1e6] * inst.m), "practical", 1, 50.0, 4))
        assert len(qr.Q) == sum(qr.bucket_of(inst).max(axis=1) >= 0)
        act = np.arange(inst.n)
        opt = opt_on(inst, act)
        tr = reconstruct(inst, act, qr, opt)
        assert {c.case_label for c in tr.calls} <= {"ExactSub", "SuperQueried"}
        assert tr.final_alg == tr.final_opt_bar == opt

    def test_verify_realizations_theory_mode(self, rng):
        inst = random_small_gap(rng, n_max=15, seed=11)
        qr = sparsify_gap(inst, SparsifyParams(0.15, 0.5, PerKnapsack([10.0] * inst.m)))
        rep = verify_realizations(inst, qr, 0.5, trials=10, seed=2)
        assert rep.realizations == 10 and not rep.violations
        assert "sampled_scale" not in rep.flags

    def test_sampled_scale_flag(self, rng):
        inst = random_small_gap(rng, n_max=10, seed=12)
        qr = sparsify_gap(inst, SparsifyParams(0.1, 0.5, Sampled(trials=8, seed=1)))
        assert "sampled_scale" in verify_realizations(inst, qr, 0.5, trials=2).flags


class TestReport:
    def _reports(self, rng, k):
        out = []
        for _ in range(k):
            inst, qr = crowded_case(rng)
            out.append(verify_realizations(inst, qr, 0.5, trials=2, seed=int(rng.integers(100))))
        return out

    def test_merge_associative(self, rng):
        a, b, c = self._reports(rng, 3)
        left, right = a.merge(b).merge(c), a.merge(b.merge(c))
        assert left.to_dict() == right.to_dict()
        assert left.realizations == 6

    def test_value_margins_empty(self):
        assert not LemmaReport(0.1).value_margins()["large_value"]["holds"]

    def test_trace_serializes(self, rng):
        inst, qr = crowded_case(rng)
        act = np.arange(inst.n)
        d = reconstruct(inst, act, qr, opt_on(inst, act)).to_dict()
        assert set(d) == {"calls", "final_alg", "final_opt_bar", "epsilon", "events"}


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reconstruction_properties(seed):
    rng = np.random.default_rng(seed)
    inst, qr = (crowded_case if seed % 2 else low_value_case)(rng)
    act = sample_active(inst.n, 0.5, seed).included
    opt = opt_on(inst, act)
    tr = reconstruct(inst, act, qr, opt)
    rep = verify_lemmas(tr, inst, opt, qr.M, 0.5)
    assert rep.violations == []
    # every queried active item of OPT stays in the same knapsack in ALG
    alg = tr.final_alg.as_dict()
    for i, j in opt:
        if i in set(qr.Q.tolist()):
            assert alg.get(i) == j
