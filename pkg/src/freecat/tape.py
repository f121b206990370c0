"""Minimal eager reverse-mode differentiation over NumPy arrays.

The training objective is a modest dynamic graph (a few hundred nodes per
step), so this deliberately implements only the operations the model and
inference code actually use.  Values are computed eagerly; ``backward``
walks the recorded graph once and accumulates vector-Jacobian products.

Only ``Var`` parents are tracked: plain arrays and scalars participate as
constants.  Every vjp returns an array with exactly the parent's shape.
"""

import numpy as np

from . import kernels


class Var:
    """A node in the tape: a float64 array plus its backward edges."""

    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _node(value, pairs):
    parents = tuple((p, fn) for p, fn in pairs if isinstance(p, Var))
    return Var(value, parents)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ── arithmetic ───────────────────────────────────────────────────────────────

def add(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av + bv, [(a, lambda g: _unbroadcast(g, av.shape)),
                           (b, lambda g: _unbroadcast(g, bv.shape))])


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av - bv, [(a, lambda g: _unbroadcast(g, av.shape)),
                           (b, lambda g: _unbroadcast(-g, bv.shape))])


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av * bv, [(a, lambda g: _unbroadcast(g * bv, av.shape)),
                           (b, lambda g: _unbroadcast(g * av, bv.shape))])


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _node(out, [(a, lambda g: _unbroadcast(g / bv, av.shape)),
                       (b, lambda g: _unbroadcast(-g * out / bv, bv.shape))])


def neg(a):
    av = value_of(a)
    return _node(-av, [(a, lambda g: -g)])


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)])


# ── elementwise nonlinearities ───────────────────────────────────────────────

def exp(a):
    out = np.exp(value_of(a))
    return _node(out, [(a, lambda g: g * out)])


def log(a):
    av = value_of(a)
    return _node(np.log(av), [(a, lambda g: g / av)])


def tanh(a):
    out = np.tanh(value_of(a))
    return _node(out, [(a, lambda g: g * (1.0 - out * out))])


def sigmoid(a):
    av = value_of(a)
    out = 1.0 / (1.0 + np.exp(-av))
    return _node(out, [(a, lambda g: g * out * (1.0 - out))])


def softplus(a):
    av = value_of(a)
    out = np.logaddexp(0.0, av)
    sig = 1.0 / (1.0 + np.exp(-av))
    return _node(out, [(a, lambda g: g * sig)])


def square(a):
    av = value_of(a)
    return _node(av * av, [(a, lambda g: 2.0 * g * av)])


def clip(a, lo, hi):
    """Clamp with pass-through gradient inside the active range."""
    av = value_of(a)
    out = np.clip(av, lo, hi)
    mask = (av > lo) & (av < hi)
    return _node(out, [(a, lambda g: g * mask)])


# ── reductions and shaping ───────────────────────────────────────────────────

def sum_(a, axis=None):
    av = value_of(a)
    out = av.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, av.shape).copy()
        ge = np.expand_dims(g, axis)
        return np.broadcast_to(ge, av.shape).copy()

    return _node(out, [(a, vjp)])


def mean(a, axis=None):
    av = value_of(a)
    n = av.size if axis is None else av.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def logsumexp(a, axis):
    av = value_of(a)
    m = av.max(axis=axis, keepdims=True)
    e = np.exp(av - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(np.log(s) + m, axis=axis)
    soft = e / s

    def vjp(g):
        return np.expand_dims(g, axis) * soft

    return _node(out, [(a, vjp)])


def reshape(a, shape):
    av = value_of(a)
    return _node(av.reshape(shape), [(a, lambda g: g.reshape(av.shape))])


def concat(items, axis):
    vals = [value_of(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    pairs = []
    for i, x in enumerate(items):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        pairs.append((x, vjp))
    return _node(out, pairs)


def index(a, idx):
    """Constant fancy/basic indexing ``a[idx]`` with scatter-add backward."""
    av = value_of(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _node(av[idx], [(a, vjp)])


# ── fused / special ops ─────────────────────────────────────────────────────

def gauss_logpdf(x, mean_, scale):
    """Per-row diagonal Gaussian log-density, fused value+gradients."""
    xv, mv, sv = value_of(x), value_of(mean_), value_of(scale)
    xb, mb, sb = np.broadcast_arrays(xv, mv, sv)
    logp, dmean, dscale, dx = kernels.gauss_logpdf_grad(
        np.ascontiguousarray(xb), np.ascontiguousarray(mb), np.ascontiguousarray(sb))
    return _node(logp, [
        (x, lambda g: _unbroadcast(g[:, None] * dx, xv.shape)),
        (mean_, lambda g: _unbroadcast(g[:, None] * dmean, mv.shape)),
        (scale, lambda g: _unbroadcast(g[:, None] * dscale, sv.shape)),
    ])


def cb_logpdf(x, lam):
    """Per-row continuous-Bernoulli log-density; gradient w.r.t. lam only."""
    xv, lv = value_of(x), value_of(lam)
    xb, lb = np.broadcast_arrays(xv, lv)
    logp, dlam = kernels.cb_logpdf_grad(
        np.ascontiguousarray(xb), np.ascontiguousarray(lb))
    return _node(logp, [(lam, lambda g: _unbroadcast(g[:, None] * dlam, lv.shape))])


def gammaln(a):
    from scipy import special

    av = value_of(a)
    return _node(special.gammaln(av), [(a, lambda g: g * special.digamma(av))])


def fixed_matmul_batch(a_const, w):
    """``a_const @ w[k]`` for each batch slice of a (n, r, c) Var."""
    wv = value_of(w)
    out = np.einsum("ij,njk->nik", a_const, wv)
    return _node(out, [(w, lambda g: np.einsum("ij,nik->njk", a_const, g))])


# ── backward pass ────────────────────────────────────────────────────────────

def backward(root):
    """Accumulate gradients of a scalar ``root`` into every reachable Var."""
    if root.value.ndim != 0 and root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node._parents:
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contrib
