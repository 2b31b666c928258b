import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from cascade_tails import brw, covariance, tilt_box
from cascade_tails._rng import stream
from cascade_tails.errors import ConfigError
from conftest import mc_close

BC = brw.BETA_C


def alphas_oracle(eps):
    c = (1 - eps) / math.e
    return float(-special.lambertw(-c, 0).real), float(-special.lambertw(-c, -1).real)


class TestAlphas:
    @pytest.mark.parametrize("eps", [0.01, 0.25, 0.5, 0.9, 0.999])
    def test_against_lambert_w(self, eps):
        am, ap = tilt_box.solve_alphas(eps)
        om, op = alphas_oracle(eps)
        assert am == pytest.approx(om, abs=1e-10)
        assert ap == pytest.approx(op, abs=1e-10)

    def test_frozen_values(self):
        am, ap = tilt_box.solve_alphas(0.5)
        assert am == pytest.approx(0.231960953, abs=1e-9)
        assert ap == pytest.approx(2.67834699, abs=1e-8)
        # eps = 1 - 2/e puts the upper root at exactly 2
        assert tilt_box.solve_alphas(1 - 2 / math.e)[1] == pytest.approx(2.0, abs=1e-12)

    @given(st.floats(1e-6, 1 - 1e-6))
    @settings(max_examples=50, deadline=None)
    def test_roots_bracket_one(self, eps):
        am, ap = tilt_box.solve_alphas(eps)
        assert 0 < am < 1 < ap
        for a in (am, ap):
            assert a * math.exp(-a) == pytest.approx((1 - eps) / math.e, rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2, 1.5, float("nan")])
    def test_rejects_out_of_range(self, eps):
        with pytest.raises(ConfigError):
            tilt_box.solve_alphas(eps)


class TestBox:
    def test_geometry(self):
        box = tilt_box.make_box(5, 0.5, BC / 2)
        am, ap = tilt_box.solve_alphas(0.5)
        beta = BC / 2
        assert box.lo == pytest.approx(beta * 5 - ap / beta)
        assert box.hi == pytest.approx(beta * 5 - am / beta)
        assert box.dim == 32
        assert box.threshold == pytest.approx(-0.5 * brw.essential_infimum(5, beta).magnitude)

    @given(st.integers(1, 7), st.floats(0.05, 0.95), st.floats(0.1, 1.1), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_box_points_are_in_the_tail(self, n, eps, beta, seed):
        box = tilt_box.make_box(n, eps, beta)
        x = tilt_box.uniform_box_points(box, 50, stream(seed))
        assert np.all(box.contains(x))
        assert np.all(brw.derivative_values(x, beta, n) <= box.threshold * (1 - 1e-12))

    def test_corner_values_hit_threshold(self):
        box = tilt_box.make_box(3, 0.3, 0.8)
        for edge in (box.lo, box.hi):
            z = brw.derivative_values(np.full(8, edge), 0.8, 3)
            assert z == pytest.approx(box.threshold, rel=1e-9)

    def test_degenerate_box(self):
        with pytest.raises(ConfigError):
            tilt_box.make_box(3, 1e-18, 0.5)
        with pytest.raises(ConfigError):
            tilt_box.make_box(3, 0.5, 0.0)


class TestBoxProbability:
    beta = BC / 2

    def test_n1_exact(self):
        box = tilt_box.make_box(1, 0.5, self.beta)
        p = (stats.norm.cdf(box.hi) - stats.norm.cdf(box.lo)) ** 2
        assert tilt_box.exact_box_probability_n1(box) == pytest.approx(p, rel=1e-12)
        assert math.log(p) == pytest.approx(-1.0993294, abs=1e-6)

    @pytest.mark.parametrize("proposal", ["tree", "uniform"])
    def test_n1_estimate(self, proposal):
        box = tilt_box.make_box(1, 0.5, self.beta)
        est = tilt_box.box_probability(1, 0.5, self.beta, 20_000, 1, proposal=proposal)
        assert abs(est.log_prob - math.log(tilt_box.exact_box_probability_n1(box))) <= 4 * est.se_log
        assert est.ci_lo < est.log_prob < est.ci_hi

    def test_n3_against_gaussian_cdf(self):
        # n = 3 has an 8-dimensional box; compare with the uniform estimator at large sample size
        tree = tilt_box.box_probability(3, 0.5, self.beta, 20_000, 2)
        uni = tilt_box.box_probability(3, 0.5, self.beta, 200_000, 3, proposal="uniform")
        assert abs(tree.log_prob - uni.log_prob) <= 4 * math.hypot(tree.se_log, uni.se_log)

    def test_grid_resolution_does_not_bias(self):
        a = tilt_box.box_probability(5, 0.5, self.beta, 20_000, 4, grid_points=200)
        b = tilt_box.box_probability(5, 0.5, self.beta, 20_000, 4, grid_points=800)
        assert abs(a.log_prob - b.log_prob) <= 4 * math.hypot(a.se_log, b.se_log)

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_analytic_bound_is_below(self, n):
        est = tilt_box.box_probability(n, 0.5, self.beta, 5000, 5)
        assert est.analytic_lower_bound <= est.ci_lo

    def test_grid_approximation_close(self):
        prop = tilt_box.tree_proposal(6, 0.5, self.beta)
        est = tilt_box.box_probability(6, 0.5, self.beta, 20_000, 5)
        assert prop.approx_log_prob == pytest.approx(est.log_prob, abs=0.05)

    def test_tree_samples_stay_in_box(self):
        prop = tilt_box.tree_proposal(4, 0.5, self.beta)
        pos, log_w = prop.sample(1000, stream(8))
        assert np.all(prop.box.contains(brw.leaves(pos, 4)))
        assert np.all(np.isfinite(log_w))
        assert np.all(pos[:, 1] == 0.0)

    def test_guards(self):
        from cascade_tails.errors import ResourceGuardError

        with pytest.raises(ResourceGuardError):
            tilt_box.box_probability(tilt_box.MAX_BOX_N + 1, 0.5, self.beta)
        with pytest.raises(ConfigError):
            tilt_box.box_probability(0, 0.5, self.beta)
        with pytest.raises(ConfigError):
            tilt_box.box_probability(2, 0.5, self.beta, 100, proposal="nope")


class TestTilt:
    @pytest.mark.parametrize("n,a", [(1, 0.7), (3, -1.0), (4, 2.0)])
    def test_density_ratio_against_gaussian(self, n, a, rng):
        # log Y equals the log-likelihood ratio N(a 1, Sigma) / N(0, Sigma)
        x = rng.standard_normal((6, 2**n)) * 2
        shifted = covariance.quad_form_inv_dense(n, x - a)
        base = covariance.quad_form_inv_dense(n, x)
        assert np.allclose(tilt_box.log_tilt_density(x, a), -0.5 * (shifted - base), atol=1e-10)

    def test_expectation_one(self):
        x = brw.leaves(brw.sample_positions(5, 200_000, stream(4)), 5)
        assert mc_close(np.exp(tilt_box.log_tilt_density(x, -1.0)), 1.0)

    def test_tilted_sample_shifts_leaves_only(self, rng):
        r = tilt_box.tilted_sample(4, -1.0, rng)
        assert r.positions[1] == 0.0
        g = rng.standard_normal(1)  # the tree keeps internal structure
        assert r.leaf_positions.shape == (16,)

    def test_tilted_mean(self):
        x = tilt_box.tilted_leaves(6, -1.0, 50_000, stream(5))
        assert mc_close(x.mean(axis=1), -1.0)
        assert np.allclose(np.cov(x[:, :4].T), covariance.build_sigma(6)[:4, :4], atol=0.1)

    def test_n0_rejected(self):
        with pytest.raises(ConfigError):
            tilt_box.tilted_sample(0, 1.0)
        with pytest.raises(ConfigError):
            tilt_box.log_tilt_density(np.zeros(1), 1.0)

    @given(st.floats(-3, 3), st.floats(0.0, 1.1), st.integers(1, 7), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_shift_identity(self, a, beta, n, seed):
        r = brw.sample_brw(n, stream(seed))
        _, residual = tilt_box.shifted_derivative(r, a, beta)
        assert residual <= 1e-12
