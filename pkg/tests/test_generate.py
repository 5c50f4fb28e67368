import math

import numpy as np
import pytest
from scipy import stats

from polysparse.generate import (
    FULL_GRID,
    GenParams,
    GridSpec,
    TruncNormal,
    Uniform,
    capacity_rule,
    derive_seed,
    gaussian_copula_pairs,
    generate,
    inverse_cdf,
    parse_marginal,
)


class TestMarginals:
    def test_uniform_inverse(self):
        assert inverse_cdf(Uniform(0, 100), 0.25) == 25.0

    def test_truncnormal_median_and_bounds(self):
        tn = TruncNormal(50, 15, 0, 100)
        assert inverse_cdf(tn, 0.5) == pytest.approx(50.0, abs=1e-9)
        x = inverse_cdf(tn, np.array([1e-12, 1 - 1e-12]))
        assert 0 <= x[0] < x[1] <= 100

    def test_truncnormal_cdf_inverts_ppf(self):
        tn = TruncNormal(10, 5, 1, 30)
        u = np.linspace(0.01, 0.99, 25)
        np.testing.assert_allclose(tn.cdf(tn.ppf(u)), u, atol=1e-12)

    def test_inverse_cdf_domain(self):
        with pytest.raises(ValueError):
            inverse_cdf(Uniform(0, 1), 1.0)

    def test_parse(self):
        assert parse_marginal("Uniform(1,20)") == Uniform(1, 20)
        assert parse_marginal("truncnormal(50, 15, 0, 100)") == TruncNormal(50, 15, 0, 100)
        assert parse_marginal("uniform", "weight") == Uniform(1, 20)
        with pytest.raises(ValueError):
            parse_marginal("Beta(1,2)")

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            Uniform(2, 1)
        with pytest.raises(ValueError):
            TruncNormal(0, 0, -1, 1)


class TestCopula:
    @pytest.mark.parametrize("rho", [-0.8, 0.0, 0.5])
    def test_spearman_matches_closed_form(self, rho):
        u1, u2 = gaussian_copula_pairs(rho, 20000, seed=3)
        target = 6 / math.pi * math.asin(rho / 2)
        assert stats.spearmanr(u1, u2).statistic == pytest.approx(target, abs=0.03)

    def test_rho_one_is_comonotone(self):
        u1, u2 = gaussian_copula_pairs(1.0, 1000, seed=1)
        np.testing.assert_allclose(u1, u2)

    def test_rejects_bad_rho(self):
        with pytest.raises(ValueError):
            gaussian_copula_pairs(1.5, 10, 0)


class TestGenerate:
    def test_pure_function_of_params(self):
        gp = GenParams(n=40, m=2, rho=0.3, redundancy_target=2, seed=9)
        assert generate(gp) == generate(gp)
        assert not generate(gp) == generate(GenParams(n=40, m=2, rho=0.3, redundancy_target=2, seed=10))

    def test_rows_do_not_depend_on_n(self):
        # each item row has its own stream, so a prefix of a larger draw
        # carries the same values
        a = generate(GenParams(n=30, m=2, seed=4))
        b = generate(GenParams(n=60, m=2, seed=4))
        np.testing.assert_array_equal(a.values, b.values[:30])

    def test_capacity_rule(self):
        w = np.arange(1, 101, dtype=float).reshape(50, 2)
        q = np.quantile(w, 0.05)
        assert capacity_rule(w, 50, 2, 4) == pytest.approx(q * 50 / 2 / 4)

    def test_individually_feasible(self):
        for s in range(20):
            inst = generate(GenParams(n=50, m=3, rho=-0.8, redundancy_target=3, seed=s))
            assert np.all(np.any(inst.weights <= inst.capacities[None, :], axis=1))

    def test_too_small_capacity_is_an_error(self):
        with pytest.raises(ValueError, match="capacity"):
            generate(GenParams(n=4, m=3, redundancy_target=50, seed=0))

    def test_log(self):
        inst, info = generate(GenParams(n=20, m=1, seed=1), return_log=True)
        assert set(info) == {"clamped", "weight_quantile"}

    def test_params_round_trip(self):
        gp = GenParams(n=5, m=2, rho=0.5, value_marginal=TruncNormal(50, 15, 0, 100), seed=7)
        assert GenParams.from_dict(gp.to_dict()) == gp

    @pytest.mark.parametrize("kw", [dict(rho=1.2), dict(m=0), dict(redundancy_target=0)])
    def test_param_validation(self, kw):
        with pytest.raises(ValueError):
            GenParams(n=5, **{"m": 1, **kw})


class TestGrid:
    def test_full_grid_size(self):
        assert FULL_GRID.size() == 4 * 3 * 7 * 10 * 4 * 8

    def test_scaled(self):
        assert FULL_GRID.scaled(0.1).n == (100, 200, 500, 1000)

    def test_settings_order_is_fixed(self):
        g = GridSpec(n=(10, 20), m=(1,), rho=(0.0,), redundancy=(2,), marginals=(("uniform", "uniform"),), replicates=1)
        assert [s[0] for s in g.settings()] == [10, 20]

    def test_derive_seed(self):
        assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
        assert derive_seed(1, 1, 2) != derive_seed(0, 1, 2)
