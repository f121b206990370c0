"""NumPy reference implementations of the numeric hot kernels.

Every function here has a signature-compatible twin in the compiled core
(``_core.pyx``).  The reference versions are the semantic ground truth; the
compiled ones only exist because these run in the innermost loops of
sampling and training.
"""

import numpy as np

LOG_2PI = 1.8378770664093453

# Width of the neighbourhood of lam = 1/2 inside which the closed form of
# the continuous-Bernoulli log-normalizer is replaced by its Taylor
# expansion (0/0 at the midpoint otherwise).
_CB_TAYLOR_HALFWIDTH = 1e-3


def row_softmax(m):
    """Row-wise softmax of a 2-D array, stabilized by max subtraction."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def gauss_logpdf_grad(x, mean, scale):
    """Diagonal-Gaussian log-density summed per row, with gradients.

    All three inputs are (n, d) arrays.  Returns ``(logp, dmean, dscale,
    dx)`` where ``logp`` has shape (n,) and the gradients match the input
    shapes.
    """
    z = (x - mean) / scale
    logp = (-0.5 * z * z - np.log(scale) - 0.5 * LOG_2PI).sum(axis=1)
    dx = -z / scale
    dmean = -dx
    dscale = (z * z - 1.0) / scale
    return logp, dmean, dscale, dx


def cb_log_norm_grad(lam):
    """Log-normalizer of the continuous Bernoulli and its derivative.

    The density on [0, 1] is ``C(lam) * lam**x * (1-lam)**(1-x)`` with
    ``C(lam) = 2*atanh(1-2*lam)/(1-2*lam)`` away from lam = 1/2 and
    ``C(1/2) = 2``.  Near the midpoint both numerator and denominator
    vanish, so a 4th-order Taylor expansion in ``u = 1-2*lam`` is used:
    ``log C = log 2 + u**2/3 + 13*u**4/90 + O(u**6)``.
    """
    lam = np.asarray(lam, dtype=np.float64)
    u = 1.0 - 2.0 * lam
    near = np.abs(u) < 2.0 * _CB_TAYLOR_HALFWIDTH
    u_safe = np.where(near, 0.5, u)
    at = np.arctanh(u_safe)
    val_far = np.log(2.0 * at / u_safe)
    dval_far = (1.0 / (at * (1.0 - u_safe * u_safe)) - 1.0 / u_safe) * -2.0
    u2 = u * u
    val_near = np.log(2.0) + u2 / 3.0 + 13.0 / 90.0 * u2 * u2
    dval_near = -2.0 * (2.0 * u / 3.0 + 26.0 / 45.0 * u2 * u)
    return np.where(near, val_near, val_far), np.where(near, dval_near, dval_far)


def cb_logpdf_grad(x, lam):
    """Continuous-Bernoulli log-density summed per row, with d/dlam.

    ``x`` and ``lam`` are (n, d) arrays with entries in (0, 1).  Returns
    ``(logp, dlam)`` with ``logp`` of shape (n,).
    """
    logc, dlogc = cb_log_norm_grad(lam)
    logp = (logc + x * np.log(lam) + (1.0 - x) * np.log1p(-lam)).sum(axis=1)
    dlam = dlogc + x / lam - (1.0 - x) / (1.0 - lam)
    return logp, dlam
