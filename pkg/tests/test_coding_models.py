"""Oracle and property tests for the probability models and codelengths.

Expected values marked as hand-derived were computed from the closed
forms directly; integrals are checked against scipy's adaptive
Gauss-Kronrod quadrature, which is independent of the package's own
composite Gauss-Legendre evaluation.
"""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from mdlsparse.coding_models import (
    ExponentialModel,
    GaussianModel,
    LaplacianModel,
    LGModel,
    LGParams,
    MOEGModel,
    MOEGParams,
    MOEModel,
    MOEParams,
    discretized_codelength,
    exponential_ml_theta,
    integer_universal_codelength,
    kt_probability,
    lg_neg_log_density,
    lg_theta_estimate,
    moe_codelength,
    moeg_codelength,
    quantize,
    support_codelength,
)


# ---------------------------------------------------------------------------
# quantizer
# ---------------------------------------------------------------------------

class TestQuantize:
    def test_zero_fixed_point(self):
        assert quantize(0.0, 16.0) == 0.0

    def test_round_to_nearest(self):
        assert quantize(17.3, 16.0) == 16.0

    def test_ties_away_from_zero(self):
        assert quantize(-8.1, 16.0) == -16.0
        assert quantize(8.0, 16.0) == 16.0
        assert quantize(-8.0, 16.0) == -16.0

    def test_error_within_half_step(self, rng):
        x = rng.uniform(-1000, 1000, size=500)
        for delta in (16.0, 1.0, 0.25):
            q = quantize(x, delta)
            assert np.all(np.abs(q - x) <= delta / 2 + 1e-12)
            assert np.allclose(np.rint(q / delta), q / delta)

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            quantize(1.0, 0.0)


# ---------------------------------------------------------------------------
# support code
# ---------------------------------------------------------------------------

class TestSupportCodelength:
    def test_empty_support_large_p(self):
        assert support_codelength(256, 0) == pytest.approx(math.log2(257))

    def test_small_case(self):
        assert support_codelength(4, 2) == pytest.approx(
            math.log2(5) + math.log2(6), abs=1e-12)

    def test_single_position(self):
        assert support_codelength(1, 1) == pytest.approx(1.0)

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            support_codelength(4, 5)

    @pytest.mark.parametrize("p", range(1, 13))
    def test_kraft_equality(self, p):
        # summing over every support of every size must spend the whole
        # probability budget: sum_k C(p,k) 2^-L(p,k) == 1
        total = sum(math.comb(p, k) * 2.0 ** -support_codelength(p, k)
                    for k in range(p + 1))
        assert total == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# magnitude mixture
# ---------------------------------------------------------------------------

class TestMOE:
    def test_value_at_zero(self):
        # -log2(3) + log2(50): hand-derived from the closed form
        got = moe_codelength(0.0, MOEParams(3.0, 50.0))
        assert got == pytest.approx(math.log2(50.0 / 3.0), abs=1e-12)

    def test_matches_defining_mixture_integral(self):
        # oracle: adaptive quadrature of the Gamma-mixed exponential
        for kappa, beta in [(3.0, 50.0), (2.0, 10.0), (4.5, 1.0)]:
            for v in [0.0, 1.0, 16.0, 100.0, 900.0]:
                def integrand(th):
                    gamma_pdf = math.exp(
                        kappa * math.log(beta) - gammaln(kappa)
                        + (kappa - 1) * math.log(th) - beta * th)
                    return gamma_pdf * th * math.exp(-th * v)
                val, _ = integrate.quad(integrand, 0, np.inf,
                                        epsabs=1e-300, epsrel=1e-12,
                                        limit=300)
                expect = -math.log2(val)
                got = moe_codelength(v, MOEParams(kappa, beta))
                assert got == pytest.approx(expect, abs=1e-6)

    def test_monotone_increasing(self):
        params = MOEParams(3.0, 50.0)
        v = np.linspace(0, 500, 200)
        bits = moe_codelength(v, params)
        assert np.all(np.diff(bits) > 0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            moe_codelength(-1.0, MOEParams(3.0, 50.0))

    def test_density_integrates_to_one(self):
        model = MOEModel(3.0, 50.0)
        val, _ = integrate.quad(
            lambda v: 2.0 ** -model.neg_log2_density(np.array([v]))[0],
            0, np.inf, epsrel=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# Gaussian+Laplacian error model
# ---------------------------------------------------------------------------

class TestLG:
    def test_symmetry(self, rng):
        params = LGParams(sigma2=9.0, theta=4.0)
        e = rng.uniform(0, 500, size=200)
        np.testing.assert_allclose(lg_neg_log_density(e, params),
                                   lg_neg_log_density(-e, params), rtol=1e-12)

    def test_gaussian_limit(self):
        # theta -> 0 must recover the pure Gaussian codelength
        sigma2 = 7.0
        e = np.array([0.0, 0.5, 3.0, -10.0])
        got = lg_neg_log_density(e, LGParams(sigma2, 1e-9))
        expect = (e ** 2 / (2 * sigma2) + 0.5 * np.log(2 * np.pi * sigma2)) \
            / np.log(2)
        np.testing.assert_allclose(got, expect, rtol=1e-6)
        exact = lg_neg_log_density(e, LGParams(sigma2, 0.0))
        np.testing.assert_allclose(exact, expect, rtol=1e-12)

    def test_laplacian_asymptote(self):
        # for large |e| the codelength grows like a Laplacian of scale theta
        params = LGParams(sigma2=4.0, theta=3.0)
        for e in (1e4, 1e6):
            ratio = lg_neg_log_density(e, params) / (e * math.log2(math.e)
                                                     / params.theta)
            assert ratio == pytest.approx(1.0, abs=1e-3)

    def test_matches_numeric_convolution(self):
        # oracle: direct quadrature of the defining convolution
        sigma2, theta = 6.25, 2.0
        s = math.sqrt(sigma2)
        for e in [0.0, 0.7, -3.0, 12.0]:
            def integrand(z):
                gauss = math.exp(-z * z / (2 * sigma2)) / (s * math.sqrt(2 * math.pi))
                lap = math.exp(-abs(e - z) / theta) / (2 * theta)
                return gauss * lap
            val, _ = integrate.quad(integrand, -np.inf, np.inf,
                                    epsabs=1e-14, epsrel=1e-12, limit=300)
            got = lg_neg_log_density(e, LGParams(sigma2, theta))
            assert got == pytest.approx(-math.log2(val), abs=1e-8)

    def test_density_integrates_to_one(self):
        model = LGModel(2.0, 5.0)
        val, _ = integrate.quad(
            lambda e: 2.0 ** -float(model.neg_log2_density(np.array([e]))[0]),
            -np.inf, np.inf, limit=300)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_convexity_midpoints(self, rng):
        model = LGModel(4.0, 2.0)
        for _ in range(300):
            e1, e3 = np.sort(rng.uniform(-80, 80, size=2))
            e2 = 0.5 * (e1 + e3)
            f = model.neg_log2_density(np.array([e1, e2, e3]))
            assert f[1] <= 0.5 * (f[0] + f[2]) + 1e-9

    def test_bounded_influence(self):
        # |f'| never exceeds the Laplacian slope log2(e)/theta
        model = LGModel(9.0, 2.5)
        grid = np.concatenate([np.linspace(-500, 500, 4001),
                               np.array([1e4, 1e6, -1e4, -1e6])])
        grad = model.grad_neg_log2_density(grid)
        bound = math.log2(math.e) / 2.5
        assert np.max(np.abs(grad)) <= bound * (1 + 1e-6)

    def test_gradient_finite_differences(self, rng):
        model = LGModel(4.0, 2.0)
        e = rng.uniform(-60, 60, size=64)
        h = 1e-6
        numeric = (model.neg_log2_density(e + h)
                   - model.neg_log2_density(e - h)) / (2 * h)
        analytic = model.grad_neg_log2_density(e)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_cdf_matches_quadrature(self):
        model = LGModel(4.0, 2.0)
        for e in [-30.0, -2.0, 0.0, 1.5, 10.0]:
            val, _ = integrate.quad(
                lambda t: 2.0 ** -float(model.neg_log2_density(np.array([t]))[0]),
                -np.inf, e, limit=300)
            assert float(model.cdf(np.array([e]))[0]) == pytest.approx(
                val, abs=1e-10)

    def test_degenerate_sigma_is_laplacian(self):
        got = lg_neg_log_density(np.array([0.0, 3.0]), LGParams(0.0, 2.0))
        expect = (np.array([0.0, 3.0]) / 2.0 + math.log(4.0)) / math.log(2)
        np.testing.assert_allclose(got, expect, rtol=1e-12)


# ---------------------------------------------------------------------------
# Gamma-mixed LG model
# ---------------------------------------------------------------------------

class TestMOEG:
    def test_symmetry(self):
        params = MOEGParams(sigma2=25.0, kappa=3.0, beta=1.0)
        e = np.array([0.3, 1.0, 7.7, 123.0])
        np.testing.assert_allclose(moeg_codelength(e, params),
                                   moeg_codelength(-e, params), rtol=1e-12)

    def test_quadrature_oracle_agreement(self):
        # oracle: adaptive Gauss-Kronrod over the mixing scale, tol 1e-10
        sigma2, kappa, beta = 25.0, 3.0, 1.0
        model = MOEGModel(sigma2, kappa, beta)
        lg_params_cache = {}

        def oracle_bits(e):
            def integrand(th):
                gamma_pdf = math.exp(kappa * math.log(beta) - gammaln(kappa)
                                     + (kappa - 1) * math.log(th) - beta * th)
                key = th
                if key not in lg_params_cache:
                    lg_params_cache[key] = LGParams(sigma2, th)
                dens = 2.0 ** -lg_neg_log_density(e, lg_params_cache[key])
                return gamma_pdf * dens
            val, _ = integrate.quad(integrand, 0, np.inf,
                                    epsabs=1e-300, epsrel=1e-10, limit=500)
            return -math.log2(val)

        for e in [0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0]:
            got = float(model.neg_log2_density(np.array([e]))[0])
            assert got == pytest.approx(oracle_bits(e), abs=1e-6), f"e={e}"

    def test_redescending_derivative(self):
        model = MOEGModel(25.0, 3.0, 1.0)
        h = 1e-2
        slopes = []
        for e in (1e3, 1e4, 1e5):
            f = model.neg_log2_density(np.array([e - h, e + h]))
            slopes.append(abs((f[1] - f[0]) / (2 * h)))
        assert slopes[0] > slopes[1] > slopes[2]
        assert slopes[2] < slopes[0] / 5

    def test_density_integrates_to_one(self):
        model = MOEGModel(4.0, 3.0, 1.0)
        val, _ = integrate.quad(
            lambda e: 2.0 ** -float(model.neg_log2_density(np.array([e]))[0]),
            -np.inf, np.inf, limit=400)
        assert val == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

class TestDiscretizedCodelength:
    def test_fine_step_matches_exact_bin(self):
        # as delta -> 0 the density-times-step approximation and the exact
        # bin integral agree; oracle integrates the bin by quadrature
        model = LGModel(1.0, 1.0)
        delta = 1e-3
        for x in [0.0, 0.25, -1.5]:
            xq = quantize(x, delta)
            got = discretized_codelength(model, xq, delta)
            val, _ = integrate.quad(
                lambda t: 2.0 ** -float(model.neg_log2_density(np.array([t]))[0]),
                xq - delta / 2, xq + delta / 2, epsabs=1e-16)
            assert got == pytest.approx(-math.log2(val), abs=1e-4)

    def test_nonnegative(self, rng):
        for model in (LGModel(1.0, 1.0), GaussianModel(0.04),
                      LaplacianModel(0.01), ExponentialModel(0.5),
                      MOEModel(3.0, 50.0)):
            lo = max(model.support[0], -50.0)
            x = quantize(rng.uniform(lo, 50.0, size=100), 2.0)
            x = np.clip(x, model.support[0], None)
            bits = discretized_codelength(model, x, 2.0)
            assert np.all(bits >= 0.0)

    def test_bin_probabilities_sum_to_one(self):
        # full-line sum of 2^-L over all bins for the LG model at delta 1
        model = LGModel(1.0, 1.0)
        centers = np.arange(-4000, 4001) * 1.0
        bits = discretized_codelength(model, centers, 1.0)
        assert np.sum(2.0 ** -bits) == pytest.approx(1.0, abs=1e-6)

    def test_coarse_exponential_bins(self):
        # one-sided support: bin at v=0 spans [0, delta/2]
        model = ExponentialModel(16.0)
        bits0 = discretized_codelength(model, 0.0, 16.0)
        expect = -math.log2(1.0 - math.exp(-8.0 / 16.0))
        assert bits0 == pytest.approx(expect, abs=1e-12)


# ---------------------------------------------------------------------------
# sequential estimators
# ---------------------------------------------------------------------------

class TestKT:
    def test_first_sample(self):
        assert kt_probability(0, 1) == 0.5

    def test_after_three_ones(self):
        assert kt_probability(3, 4) == 0.875

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            kt_probability(4, 4)

    def test_universality_bound_all_length_10_strings(self):
        # sequential KT bits <= n H(empirical) + 0.5 log2 n + 1 for every
        # binary string of length 10 (exhaustive)
        n = 10
        for word in range(2 ** n):
            bits = 0.0
            ones = 0
            for j in range(1, n + 1):
                b = (word >> (j - 1)) & 1
                prob = kt_probability(ones, j)
                bits += -math.log2(prob if b else 1.0 - prob)
                ones += b
            freq = ones / n
            if freq in (0.0, 1.0):
                entropy = 0.0
            else:
                entropy = -(freq * math.log2(freq)
                            + (1 - freq) * math.log2(1 - freq))
            assert bits <= n * entropy + 0.5 * math.log2(n) + 1.0 + 1e-9


class TestEstimators:
    def test_exponential_ml_basic(self):
        assert exponential_ml_theta([16.0, 32.0, 48.0], 16.0) == \
            pytest.approx(16.0)

    def test_exponential_ml_floor(self):
        assert exponential_ml_theta([16.0, 16.0], 16.0) == \
            pytest.approx(16.0 / 100.0)

    def test_exponential_ml_single(self):
        assert exponential_ml_theta([32.0], 16.0) == pytest.approx(16.0)

    def test_exponential_ml_empty_fallback(self):
        assert exponential_ml_theta([], 16.0) == 16.0
        assert exponential_ml_theta([], 16.0, fallback=25.0) == 25.0

    def test_lg_theta_pure_noise(self):
        assert lg_theta_estimate(400.0, 100, 4.0) == 0.0

    def test_lg_theta_excess_variance(self):
        assert lg_theta_estimate(100 * (4.0 + 4.0), 100, 4.0) == \
            pytest.approx(1.0)

    def test_lg_theta_clamped(self):
        assert lg_theta_estimate(100.0, 100, 9.0) == 0.0


class TestIntegerCode:
    def test_one(self):
        assert integer_universal_codelength(1) == pytest.approx(
            math.log2(2.865064), abs=1e-9)

    def test_two(self):
        assert integer_universal_codelength(2) == pytest.approx(
            math.log2(2.865064) + 1.0, abs=1e-9)

    def test_growing(self):
        ks = np.array([1, 2, 10, 1000, 10 ** 9])
        bits = integer_universal_codelength(ks)
        assert np.all(np.diff(bits) > 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            integer_universal_codelength(0)

    def test_kraft_partial_sum(self):
        ks = np.arange(1, 1_000_001)
        bits = integer_universal_codelength(ks)
        assert np.sum(2.0 ** -bits) <= 1.0 + 1e-12
