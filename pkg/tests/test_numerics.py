import numpy as np
import pytest

from freecat import kernels
from freecat.numerics import (DistParams, SupportError, cbernoulli_params,
                              finite_diff_grad, gamma_params, gaussian_params,
                              log_density, lognormal_params, make_rng,
                              mat_exp, sample, softmax_rows, split_rng)
from tests.conftest import naive_softmax_rows, series_mat_exp


class TestMatExp:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(mat_exp(np.zeros((3, 3))), np.eye(3))

    def test_nilpotent_exact(self):
        out = mat_exp(np.array([[0.0, 1.0], [0.0, 0.0]]))
        np.testing.assert_array_equal(out, np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_diamond_entry(self, diamond_graph):
        iu = diamond_graph.index["unit"]
        ix = diamond_graph.index["X4"]
        got = mat_exp(diamond_graph.adjacency)[iu, ix]
        # Two length-4 walks, each weighing 1/4!.
        assert got == series_mat_exp(diamond_graph.adjacency)[iu, ix]
        assert abs(got - 1.0 / 12.0) < 1e-15

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            a = rng.uniform(-1.0, 1.0, size=(8, 8))
            np.testing.assert_allclose(mat_exp(a), series_mat_exp(a),
                                       atol=1e-10)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            mat_exp(np.zeros((2, 3)))


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax_rows([[0.0, 0.0]], 1.0),
                                   [[0.5, 0.5]])

    def test_closed_form(self):
        np.testing.assert_allclose(softmax_rows([[np.log(2.0), 0.0]], 1.0),
                                   [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)

    def test_high_temperature_limit(self):
        out = softmax_rows([[1.0, 0.0]], 1e6)
        np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-5)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for beta in (0.1, 1.0, 10.0):
            m = rng.uniform(-50.0, 50.0, size=(40, 17))
            out = softmax_rows(m, beta)
            np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_naive_when_safe(self):
        rng = np.random.default_rng(4)
        m = rng.uniform(-5.0, 5.0, size=(6, 6))
        np.testing.assert_allclose(softmax_rows(m, 2.0),
                                   naive_softmax_rows(m, 2.0), atol=1e-14)

    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError, match="beta"):
            softmax_rows([[0.0]], 0.0)


class TestLogDensity:
    def test_gamma_unit_exponential(self):
        assert log_density(gamma_params(1.0, 1.0), [1.0]) == -1.0

    def test_gaussian_standard_mode(self):
        got = log_density(gaussian_params(0.0, 1.0), [0.0])
        assert abs(got - (-0.9189385332046727)) < 1e-12

    def test_cb_log_normalizer_at_half(self):
        val, _ = kernels.cb_log_norm_grad(np.array([0.5]))
        assert abs(val[0] - np.log(2.0)) < 1e-12

    def test_cb_density_constant_at_half(self):
        # At rate 1/2 the normalizer is 2 and the kernel is 2**-1, so the
        # density is identically 1 on (0, 1).
        d = cbernoulli_params([0.5])
        for x in (0.1, 0.3, 0.9):
            assert abs(log_density(d, [x])) < 1e-12

    @pytest.mark.parametrize("dist,lo,hi", [
        (gamma_params(2.0, 1.5), 1e-9, 40.0),
        (gaussian_params(0.3, 0.7), -10.0, 10.0),
        (lognormal_params(0.1, 0.5), 1e-9, 40.0),
        (cbernoulli_params(0.3), 1e-9, 1.0 - 1e-9),
        (cbernoulli_params(0.5), 1e-9, 1.0 - 1e-9),
        (cbernoulli_params(0.5001), 1e-9, 1.0 - 1e-9),
    ])
    def test_densities_integrate_to_one(self, dist, lo, hi):
        xs = np.linspace(lo, hi, 20001)
        ys = np.array([np.exp(log_density(dist, [x])) for x in xs])
        total = np.trapezoid(ys, xs)
        assert abs(total - 1.0) < 1e-3

    def test_support_violations(self):
        with pytest.raises(SupportError):
            log_density(gamma_params(1.0, 1.0), [-1.0])
        with pytest.raises(SupportError):
            log_density(cbernoulli_params(0.3), [1.5])


class TestSample:
    def test_deterministic_given_seed(self):
        d = gaussian_params([0.0, 1.0], [1.0, 2.0])
        x1, l1 = sample(d, make_rng(9))
        x2, l2 = sample(d, make_rng(9))
        np.testing.assert_array_equal(x1, x2)
        assert l1 == l2

    def test_degenerate_scale_clamps(self):
        d = gaussian_params([3.0], [0.0])
        x, _ = sample(d, make_rng(1))
        assert abs(x[0] - 3.0) < 1e-4

    def test_gamma_monte_carlo_mean(self):
        d = gamma_params(np.ones(100000), np.ones(100000))
        x, _ = sample(d, make_rng(5))
        assert abs(x.mean() - 1.0) < 0.02

    @pytest.mark.parametrize("dist", [
        gamma_params(2.0, 3.0),
        gaussian_params([0.0, 1.0], [1.0, 0.5]),
        lognormal_params(0.2, 0.8),
        cbernoulli_params([0.3, 0.7]),
    ])
    def test_logq_matches_log_density(self, dist):
        x, logq = sample(dist, make_rng(17))
        assert logq == log_density(dist, x)

    def test_cb_inverse_cdf_distribution(self):
        # Empirical mean of the continuous Bernoulli at rate 0.7 vs the
        # quadrature mean of its density.
        d = cbernoulli_params(np.full(50000, 0.7))
        x, _ = sample(d, make_rng(23))
        xs = np.linspace(1e-9, 1 - 1e-9, 20001)
        ys = np.array([np.exp(log_density(cbernoulli_params(0.7), [t])) for t in xs])
        want = np.trapezoid(xs * ys, xs)
        assert abs(x.mean() - want) < 0.01

    def test_split_streams_differ(self):
        rng = make_rng(0)
        a, b = split_rng(rng, 2)
        assert a.standard_normal() != b.standard_normal()


class TestFiniteDiff:
    def test_square(self):
        grad = finite_diff_grad(lambda v: float(v[0] ** 2), np.array([3.0]))
        assert abs(grad[0] - 6.0) < 1e-8

    def test_constant(self):
        grad = finite_diff_grad(lambda v: 1.0, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_gaussian_mean_gradient(self):
        # d/dmean log N(x=0; mean=1, scale=1) = (x - mean) / scale**2 = -1.
        def f(mean):
            return log_density(gaussian_params(mean, [1.0]), [0.0])

        grad = finite_diff_grad(f, np.array([1.0]))
        assert abs(grad[0] - (-1.0)) < 1e-6
