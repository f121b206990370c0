"""Backend parity: the compiled kernels must match the NumPy reference."""

import numpy as np
import pytest

from freecat import kernels
from freecat.kernels import _ref

try:
    from freecat.kernels import _core
except ImportError:
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled core not built")


def _rand(rng, *shape):
    return np.ascontiguousarray(rng.uniform(-4.0, 4.0, size=shape))


@needs_ext
class TestParity:
    def test_row_softmax(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = _rand(rng, 13, 7)
            np.testing.assert_allclose(_core.row_softmax(m),
                                       _ref.row_softmax(m), rtol=1e-14)

    def test_gauss_logpdf_grad(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = _rand(rng, 9, 5)
            mean = _rand(rng, 9, 5)
            scale = np.ascontiguousarray(rng.uniform(0.05, 3.0, size=(9, 5)))
            got = _core.gauss_logpdf_grad(x, mean, scale)
            want = _ref.gauss_logpdf_grad(x, mean, scale)
            for g, w in zip(got, want):
                np.testing.assert_allclose(g, w, rtol=1e-12, atol=1e-12)

    def test_cb_log_norm_grad(self):
        rng = np.random.default_rng(2)
        lam = np.ascontiguousarray(
            np.concatenate([rng.uniform(1e-6, 1 - 1e-6, 500),
                            0.5 + rng.uniform(-3e-3, 3e-3, 500)]))
        got = _core.cb_log_norm_grad(lam)
        want = _ref.cb_log_norm_grad(lam)
        np.testing.assert_allclose(got[0], want[0], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(got[1], want[1], rtol=1e-12, atol=1e-9)

    def test_cb_logpdf_grad(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = np.ascontiguousarray(rng.uniform(1e-5, 1 - 1e-5, size=(7, 6)))
            lam = np.ascontiguousarray(rng.uniform(1e-4, 1 - 1e-4, size=(7, 6)))
            got = _core.cb_logpdf_grad(x, lam)
            want = _ref.cb_logpdf_grad(x, lam)
            np.testing.assert_allclose(got[0], want[0], rtol=1e-12)
            np.testing.assert_allclose(got[1], want[1], rtol=1e-11, atol=1e-10)


class TestLogNorm:
    def test_taylor_matches_closed_form_at_switch(self):
        # The expansion and the closed form agree through the threshold.
        lam = np.array([0.5 - 2.1e-3, 0.5 - 1.9e-3, 0.5 + 1.9e-3, 0.5 + 2.1e-3])
        val, dval = kernels.cb_log_norm_grad(lam)
        u = 1.0 - 2.0 * lam
        exact = np.log(2.0 * np.arctanh(u) / u)
        np.testing.assert_allclose(val, exact, atol=1e-13)

    def test_derivative_by_finite_difference(self):
        lam = np.array([0.1, 0.4995, 0.5, 0.5005, 0.9])
        _, dval = kernels.cb_log_norm_grad(lam)
        h = 1e-7
        up, _ = kernels.cb_log_norm_grad(lam + h)
        dn, _ = kernels.cb_log_norm_grad(lam - h)
        np.testing.assert_allclose(dval, (up - dn) / (2 * h), atol=1e-5)

    def test_backend_reported(self):
        assert kernels.BACKEND in ("ext", "ref")
