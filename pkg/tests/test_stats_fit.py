import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_tails import brw, stats_fit
from cascade_tails.errors import ConfigError

BC = brw.BETA_C


class TestFitGamma:
    def test_exact_power_law(self):
        x = np.linspace(0.5, 3.0, 8)
        fit = stats_fit.fit_gamma(x, -(x**4), 4.0)
        assert fit.gamma_hat == pytest.approx(4.0, abs=1e-12)
        assert fit.stderr < 1e-10
        assert fit.as_dict() == {"gamma_hat": fit.gamma_hat, "stderr": fit.stderr, "target_gamma": 4.0, "n_points": 8}

    @given(st.floats(0.5, 8.0), st.floats(0.01, 100.0), st.floats(0.1, 10.0))
    @settings(max_examples=50)
    def test_scale_invariance(self, gamma, c, s):
        x = np.array([0.7, 1.0, 1.6, 2.3, 3.1])
        a = stats_fit.fit_gamma(x, -c * x**gamma)
        b = stats_fit.fit_gamma(s * x, -c * x**gamma)
        assert a.gamma_hat == pytest.approx(gamma, rel=1e-9)
        assert b.gamma_hat == pytest.approx(a.gamma_hat, rel=1e-9)

    @pytest.mark.parametrize(
        "x,lp",
        [
            ([1.0, 2.0], [-1.0, -2.0]),
            ([1.0, 2.0, 3.0], [-1.0, 0.0, -2.0]),
            ([1.0, 2.0, 3.0], [-1.0, -math.inf, -2.0]),
            ([1.0, 1.0, 1.0], [-1.0, -2.0, -3.0]),
            ([1.0, -2.0, 3.0], [-1.0, -2.0, -3.0]),
            ([1.0, 2.0, 3.0], [-1.0, -2.0]),
        ],
    )
    def test_rejects_bad_input(self, x, lp):
        with pytest.raises(ConfigError):
            stats_fit.fit_gamma(x, lp)


class TestTails:
    def test_naive_tail_beta_zero(self):
        # beta = 0: Z_n is Gaussian with variance 1 - 2^-n
        from scipy.stats import norm

        est = stats_fit.empirical_tail(4, 0.0, 100_000, [0.5, 1.0], "naive", 1)
        exact = norm.logcdf(-np.array([0.5, 1.0]) / math.sqrt(1 - 2**-4))
        assert np.all(est.ci_lo <= exact + 0.02) and np.all(exact - 0.02 <= est.ci_hi)

    def test_naive_zero_beyond_infimum(self):
        beta = BC / 2
        m = brw.essential_infimum(3, beta).magnitude
        est = stats_fit.empirical_tail(3, beta, 2000, [0.1, m * 1.01], "naive", 2)
        assert est.log_prob[1] == -math.inf
        assert est.ci_lo[1] == -math.inf and est.ci_hi[1] < 0

    def test_box_tail_lower_bounds_naive(self):
        beta = BC / 2
        n = 3
        m = brw.essential_infimum(n, beta).magnitude
        x = 0.5 * m
        box = stats_fit.empirical_tail(n, beta, 0, [x], "box", 3, samples=5000)
        naive = stats_fit.empirical_tail(n, beta, 400_000, [x], "naive", 3)
        assert box.log_prob[0] <= naive.ci_hi[0]

    def test_box_tail_range(self):
        with pytest.raises(ConfigError):
            stats_fit.empirical_tail(3, 0.5, 10, [100.0], "box")
        with pytest.raises(ConfigError):
            stats_fit.empirical_tail(3, 0.5, 10, [1.0], "other")

    def test_wilson(self):
        lo, hi = stats_fit.wilson_interval(np.array([0, 50]), 100)
        assert lo[0] == 0.0 and 0 < hi[0] < 0.05
        assert lo[1] < 0.5 < hi[1]

    def test_rows_schema(self):
        est = stats_fit.empirical_tail(2, 0.5, 1000, [0.1], "naive", 4)
        assert list(est.rows()[0]) == ["method", "beta", "n", "x", "log_prob", "ci_lo", "ci_hi"]


class TestBounds:
    def test_kappa_formula(self):
        from cascade_tails.covariance import theta_constant
        from cascade_tails.tilt_box import solve_alphas

        beta, eps = BC / 2, 0.5
        am, ap = solve_alphas(eps)
        ref = 0.5 * math.log(2 * math.pi) + 0.5 * theta_constant() - math.log((ap - am) / beta) + (ap - 1) ** 2 / (2 * beta**2)
        assert stats_fit.kappa_epsilon(eps, beta) == pytest.approx(ref, rel=1e-12)

    def test_lower_bound_report(self):
        rows = stats_fit.lower_bound_report([4, 5], 0.5, BC / 2, 5000, 5)
        assert all(r["ok"] for r in rows)
        assert rows[0]["slack"] == pytest.approx(5 * 16 / 16)

    @given(st.integers(1, 60), st.floats(0.05, 1.15))
    def test_infimum_power_identity(self, n, beta):
        assert stats_fit.infimum_power_residual(n, beta) < 1e-12


class TestRemainder:
    def test_config_validation(self):
        stats_fit.RemainderCheckConfig(p=1.5).validate(BC / 2)
        with pytest.raises(ConfigError):
            stats_fit.RemainderCheckConfig(p=2.5).validate(BC / 2)
        with pytest.raises(ConfigError):
            stats_fit.RemainderCheckConfig(p=1.5).validate(0.9 * BC)  # gamma < 1.5
        with pytest.raises(ConfigError):
            stats_fit.RemainderCheckConfig(epsilon=1.2).validate(0.5)
        with pytest.raises(ConfigError):
            stats_fit.RemainderCheckConfig(m=0).validate(0.5)

    def test_proposals_agree(self):
        cfg = stats_fit.RemainderCheckConfig(0.25, 0.25, 3)
        a = stats_fit.conditional_remainder(2, BC / 2, cfg, 3000, 1)
        b = stats_fit.conditional_remainder(2, BC / 2, cfg, 6000, 2, proposal="uniform")
        assert abs(a.prob - b.prob) <= 4 * math.hypot(a.se, b.se)
        assert 0 <= a.prob <= 1

    def test_report_small(self):
        cfg = stats_fit.RemainderCheckConfig(0.25, 0.25, 3, (3, 5))
        rep = stats_fit.box_conditional_remainder(BC / 2, cfg, 1000, 3)
        assert [p.n for p in rep.points] == [3, 5]
        assert rep.non_increasing
