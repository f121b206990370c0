"""Small dense linear algebra, densities, samplers, and test oracles.

Everything here is pure given its inputs.  Stochastic operations take an
explicit generator handle; generators are counter-based (Philox) and can be
split into independent streams, so concurrent workers never share state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import kernels

LOG_2PI = kernels.LOG_2PI

SCALE_FLOOR = 1e-6
CB_LAMBDA_EPS = 1e-6


class SupportError(ValueError):
    """Argument outside the support of a distribution."""


# ── random number streams ────────────────────────────────────────────────────

def make_rng(seed, *key):
    """A counter-based generator for ``seed`` refined by integer key parts."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) & 0xFFFFFFFFFFFFFFFF for k in key]])))


def split_rng(rng, n):
    """``n`` independent child streams of ``rng``."""
    return rng.spawn(n)


# ── matrix exponential ───────────────────────────────────────────────────────

def mat_exp(a, tol=1e-12):
    """Matrix exponential by scaling-and-squaring with a truncated Taylor
    series on the scaled matrix.

    For nilpotent input the series terminates, so the result is exact up to
    rounding.  Graphs here are desk-scale dense, which keeps this simple
    scheme well inside ``tol`` of the series oracle.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"mat_exp needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("mat_exp needs finite entries")
    n = a.shape[0]
    norm = float(np.abs(a).sum(axis=1).max()) if n else 0.0
    # Graph adjacencies here have small norms; avoiding the squaring step
    # keeps terminating (nilpotent) series exact to the last ulp.
    squarings = int(math.ceil(math.log2(norm / 4.0))) if norm > 4.0 else 0
    m = a / (2.0 ** squarings)
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, 96):
        term = term @ m / k
        out = out + term
        if np.abs(term).max() <= tol / 16.0:
            break
    for _ in range(squarings):
        out = out @ out
    return out


def softmax_rows(m, beta):
    """Row-stochastic matrix ``P[i,j] = exp(M[i,j]/beta) / sum_j(...)``.

    Computed with max subtraction; every row sums to 1 within 1e-12.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    m = np.asarray(m, dtype=np.float64)
    return kernels.row_softmax(np.ascontiguousarray(m / beta))


# ── distribution parameters ──────────────────────────────────────────────────

@dataclass(frozen=True)
class DistParams:
    """Parameters of one of the four supported distribution families."""

    kind: str  # gamma | gaussian | lognormal | cbernoulli
    a: np.ndarray
    b: np.ndarray | None = None


def gamma_params(shape, rate):
    shape = np.atleast_1d(np.asarray(shape, dtype=np.float64))
    rate = np.atleast_1d(np.asarray(rate, dtype=np.float64))
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma shape and rate must be positive")
    return DistParams("gamma", shape, rate)


def gaussian_params(mean, scale):
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    scale = np.atleast_1d(np.asarray(scale, dtype=np.float64))
    if np.any(scale < 0):
        raise ValueError("gaussian scale must be nonnegative")
    scale = np.maximum(scale, SCALE_FLOOR)
    return DistParams("gaussian", mean, scale)


def lognormal_params(log_mean, log_scale):
    log_mean = np.atleast_1d(np.asarray(log_mean, dtype=np.float64))
    log_scale = np.atleast_1d(np.asarray(log_scale, dtype=np.float64))
    if np.any(log_scale <= 0):
        raise ValueError("lognormal log-scale must be positive")
    return DistParams("lognormal", log_mean, log_scale)


def cbernoulli_params(lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    lam = np.clip(lam, CB_LAMBDA_EPS, 1.0 - CB_LAMBDA_EPS)
    return DistParams("cbernoulli", lam)


def log_density(d, x):
    """Exact log-density of ``x`` (a vector in the support) under ``d``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if d.kind == "gamma":
        if np.any(x <= 0):
            raise SupportError("gamma variates must be positive")
        shape, rate = d.a, d.b
        return float(np.sum(shape * np.log(rate) - gammaln(shape)
                            + (shape - 1.0) * np.log(x) - rate * x))
    if d.kind == "gaussian":
        logp, _, _, _ = kernels.gauss_logpdf_grad(
            x[None, :], np.ascontiguousarray(d.a[None, :]),
            np.ascontiguousarray(d.b[None, :]))
        return float(logp[0])
    if d.kind == "lognormal":
        if np.any(x <= 0):
            raise SupportError("lognormal variates must be positive")
        z = (np.log(x) - d.a) / d.b
        return float(np.sum(-np.log(x) - np.log(d.b) - 0.5 * LOG_2PI - 0.5 * z * z))
    if d.kind == "cbernoulli":
        if np.any(x <= 0) or np.any(x >= 1):
            raise SupportError("continuous-Bernoulli variates must lie in (0, 1)")
        logp, _ = kernels.cb_logpdf_grad(
            x[None, :], np.ascontiguousarray(d.a[None, :]))
        return float(logp[0])
    raise ValueError(f"unknown distribution kind {d.kind!r}")


def sample(d, rng):
    """Draw ``x`` from ``d`` and return ``(x, log_density(d, x))``.

    Gaussian and lognormal draws are location-scale transforms of standard
    noise so downstream code can differentiate through them.
    """
    if d.kind == "gamma":
        x = rng.gamma(shape=d.a, scale=1.0 / d.b)
        x = np.maximum(x, 1e-300)
    elif d.kind == "gaussian":
        x = d.a + d.b * rng.standard_normal(d.a.shape)
    elif d.kind == "lognormal":
        x = np.exp(d.a + d.b * rng.standard_normal(d.a.shape))
    elif d.kind == "cbernoulli":
        # Inverse-CDF transform; near lam = 1/2 the CDF degenerates to x = u.
        u = rng.random(d.a.shape)
        lam = d.a
        near = np.abs(lam - 0.5) < 1e-6
        lam_safe = np.where(near, 0.25, lam)
        raw = np.log1p(u * (2.0 * lam_safe - 1.0) / (1.0 - lam_safe)) \
            / (np.log(lam_safe) - np.log1p(-lam_safe))
        x = np.where(near, u, raw)
        x = np.clip(x, 1e-12, 1.0 - 1e-12)
    else:
        raise ValueError(f"unknown distribution kind {d.kind!r}")
    return x, log_density(d, x)


# ── finite differences ───────────────────────────────────────────────────────

def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        step = np.zeros_like(xf)
        step[i] = h
        plus = f((xf + step).reshape(x.shape))
        minus = f((xf - step).reshape(x.shape))
        flat[i] = (plus - minus) / (2.0 * h)
    return out
