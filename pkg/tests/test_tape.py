"""Gradient checks for every tape operation against central differences."""

import numpy as np
import pytest

from freecat import tape


def numeric_grad(build, x0, h=1e-6):
    """Central-difference gradient of a scalar-valued builder."""
    g = np.zeros_like(x0)
    flat = g.reshape(-1)
    base = x0.copy().reshape(-1)
    for i in range(base.size):
        step = base.copy()
        step[i] += h
        plus = build(step.reshape(x0.shape))
        step[i] -= 2 * h
        minus = build(step.reshape(x0.shape))
        flat[i] = (plus - minus) / (2 * h)
    return g


def check(build_var, x0, atol=1e-6):
    """build_var maps a leaf Var to a scalar Var; checks its gradient."""
    leaf = tape.Var(x0)
    out = build_var(leaf)
    tape.backward(out)
    analytic = leaf.grad
    numeric = numeric_grad(lambda v: float(build_var(tape.Var(v)).value), x0)
    np.testing.assert_allclose(analytic, numeric, atol=atol, rtol=1e-4)


RNG = np.random.default_rng(7)
X23 = RNG.uniform(0.3, 1.7, size=(2, 3))
X3 = RNG.uniform(0.3, 1.7, size=3)


class TestElementwise:
    @pytest.mark.parametrize("op", [tape.exp, tape.log, tape.tanh,
                                    tape.sigmoid, tape.softplus, tape.square,
                                    tape.neg])
    def test_unary(self, op):
        check(lambda v: tape.sum_(op(v)), X23.copy())

    def test_clip_passthrough_and_block(self):
        x = np.array([-2.0, 0.3, 2.0])
        leaf = tape.Var(x)
        out = tape.sum_(tape.clip(leaf, -1.0, 1.0))
        tape.backward(out)
        np.testing.assert_array_equal(leaf.grad, [0.0, 1.0, 0.0])


class TestBinary:
    def test_add_broadcast(self):
        other = RNG.uniform(size=3)
        check(lambda v: tape.sum_(tape.add(v, other)), X23.copy())
        check(lambda v: tape.sum_(tape.add(X23, v)), X3.copy())

    def test_sub_mul_div(self):
        other = RNG.uniform(0.5, 1.5, size=(2, 3))
        check(lambda v: tape.sum_(tape.sub(v, other)), X23.copy())
        check(lambda v: tape.sum_(tape.mul(v, other)), X23.copy())
        check(lambda v: tape.sum_(tape.div(v, other)), X23.copy())
        check(lambda v: tape.sum_(tape.div(other, v)), X23.copy())

    def test_matmul_both_sides(self):
        a = RNG.uniform(size=(2, 3))
        b = RNG.uniform(size=(3, 4))
        check(lambda v: tape.sum_(tape.matmul(v, b)), a.copy())
        check(lambda v: tape.sum_(tape.matmul(a, v)), b.copy())


class TestReductionsShaping:
    def test_sum_axes(self):
        check(lambda v: tape.sum_(tape.square(tape.sum_(v, axis=0))), X23.copy())
        check(lambda v: tape.sum_(tape.square(tape.sum_(v, axis=1))), X23.copy())

    def test_mean(self):
        check(lambda v: tape.mean(tape.square(v)), X23.copy())

    def test_logsumexp(self):
        check(lambda v: tape.sum_(tape.logsumexp(v, axis=1)), X23.copy())
        x3 = RNG.uniform(size=(2, 3, 4))
        check(lambda v: tape.sum_(tape.logsumexp(v, axis=2)), x3.copy())

    def test_reshape_concat_index(self):
        check(lambda v: tape.sum_(tape.square(tape.reshape(v, (3, 2)))),
              X23.copy())
        check(lambda v: tape.sum_(tape.concat([v, tape.square(v)], axis=1)),
              X23.copy())
        idx = (np.array([0, 1, 1]),)
        check(lambda v: tape.sum_(tape.index(v, idx)), X23.copy())
        check(lambda v: tape.sum_(tape.index(v, (slice(None), 1))), X23.copy())


class TestFused:
    def test_gauss_logpdf_all_inputs(self):
        x = RNG.normal(size=(4, 3))
        mean = RNG.normal(size=(4, 3))
        scale = RNG.uniform(0.4, 2.0, size=3)
        check(lambda v: tape.sum_(tape.gauss_logpdf(v, mean, scale)), x.copy())
        check(lambda v: tape.sum_(tape.gauss_logpdf(x, v, scale)), mean.copy())
        check(lambda v: tape.sum_(tape.gauss_logpdf(x, mean, v)), scale.copy(),
              atol=1e-5)

    def test_cb_logpdf_lam(self):
        x = RNG.uniform(0.05, 0.95, size=(4, 3))
        lam = RNG.uniform(0.1, 0.9, size=(4, 3))
        check(lambda v: tape.sum_(tape.cb_logpdf(x, v)), lam.copy())

    def test_gammaln(self):
        check(lambda v: tape.sum_(tape.gammaln(v)),
              RNG.uniform(0.5, 4.0, size=5))

    def test_fixed_matmul_batch(self):
        a = RNG.uniform(size=(4, 4))
        w = RNG.uniform(size=(3, 4, 4))
        check(lambda v: tape.sum_(tape.square(tape.fixed_matmul_batch(a, v))),
              w.copy())


class TestBackward:
    def test_grad_accumulates_over_reuse(self):
        leaf = tape.Var(np.array([2.0]))
        out = tape.add(tape.square(leaf), tape.square(leaf))
        tape.backward(tape.sum_(out))
        np.testing.assert_allclose(leaf.grad, [8.0])

    def test_rejects_vector_root(self):
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(tape.Var(np.zeros(3)))
