import numpy as np
import pytest
from conftest import random_small_gap

from polysparse.instance import GapInstance
from polysparse.solvers import Budget
from polysparse.stochastic import (
    activation_probability,
    eval_sparsifier,
    realization_seeds,
    sample_active,
)

KP = GapInstance.knapsack([10, 6, 5], [5, 4, 3], 7)


class TestSampling:
    def test_p_one_is_everything(self):
        assert sample_active(7, 1.0, 3).included.tolist() == list(range(7))

    def test_size_concentrates(self):
        # binomial(10000, 0.5) has sd 50, so 150 is three sd
        assert abs(len(sample_active(10_000, 0.5, 11)) - 5000) <= 150

    def test_same_seed_same_set(self):
        a, b = sample_active(100, 0.3, 5), sample_active(100, 0.3, 5)
        np.testing.assert_array_equal(a.included, b.included)
        assert not np.array_equal(a.included, sample_active(100, 0.3, 6).included)

    def test_sorted_and_unique(self):
        idx = sample_active(500, 0.4, 2).included
        assert np.all(np.diff(idx) > 0)

    @pytest.mark.parametrize("p", [0.0, -0.5, 1.01])
    def test_bad_p(self, p):
        with pytest.raises(ValueError):
            sample_active(5, p, 0)

    def test_realization_seeds_stable(self):
        assert realization_seeds(4, 5) == realization_seeds(4, 5)
        assert len(set(realization_seeds(4, 50))) == 50


class TestActivationProbability:
    def test_certain_and_impossible(self):
        assert activation_probability([1.0, 2.0], 3.0, 1.0, trials=100) == 1.0
        assert activation_probability([1.0, 2.0], 3.5, 1.0, trials=100) == 0.0

    def test_two_items(self):
        # both must be active: p^2 = 0.25, sd of the estimate about 0.003
        est = activation_probability([1.0, 1.0], 2.0, 0.5, trials=20000, seed=1)
        assert abs(est - 0.25) < 0.015


class TestEval:
    def test_full_query_ratio_one(self, rng):
        inst = random_small_gap(rng, n_max=10)
        res = eval_sparsifier(inst, range(inst.n), 0.5, trials=30, seed=1)
        assert res.ratio == 1.0 and res.completed == 30

    def test_three_item_example(self):
        # by enumeration over the 8 realizations: E[OPT(Q and R)] = 6.5, E[OPT(R)] = 7.875
        res = eval_sparsifier(KP, [0, 1], 0.5, trials=4000, seed=2)
        assert abs(res.numerator_mean - 6.5) <= 3 * res.numerator_stderr
        assert abs(res.denominator_mean - 7.875) <= 3 * res.denominator_stderr
        assert abs(res.ratio - 6.5 / 7.875) <= 3 * res.ratio_stderr

    def test_p_one_single_realization(self):
        res = eval_sparsifier(KP, [0, 1], 1.0, trials=50)
        assert res.completed == 1
        assert res.ratio == pytest.approx(10 / 11)

    def test_monotone_in_query(self, rng):
        inst = random_small_gap(rng, n_max=12, seed=9)
        ratios = [eval_sparsifier(inst, range(k), 0.5, trials=40, seed=3).ratio for k in range(inst.n + 1)]
        # common random numbers make the estimates monotone pathwise
        assert all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:]))

    def test_empty_query(self):
        res = eval_sparsifier(KP, [], 0.5, trials=20, seed=0)
        assert res.numerator_mean == 0.0

    def test_budget_flags_realizations(self, rng):
        inst = random_small_gap(rng, n_max=12, seed=8)
        res = eval_sparsifier(inst, range(inst.n), 1.0, trials=1, budget=Budget(max_nodes=1))
        assert res.completed + res.flagged == 1

    def test_trials_validation(self):
        with pytest.raises(ValueError):
            eval_sparsifier(KP, [0], 0.5, trials=0)
