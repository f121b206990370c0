# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the NumPy kernels in ``_ref``.

These run in the innermost loops of walk sampling and training, where the
arrays are small enough that Python/NumPy dispatch overhead dominates.
Semantics must match ``_ref`` exactly; the parity tests compare both
backends on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atanh, exp, log, log1p

cnp.import_array()

LOG_2PI = 1.8378770664093453
cdef double _LOG_2PI = 1.8378770664093453
cdef double _CB_TAYLOR_EDGE = 2e-3
cdef double _LOG_2 = 0.6931471805599453


def row_softmax(double[:, ::1] m):
    """Row-wise softmax of a 2-D array, stabilized by max subtraction."""
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    out_arr = np.empty((rows, cols))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(rows):
        mx = m[i, 0]
        for j in range(1, cols):
            if m[i, j] > mx:
                mx = m[i, j]
        s = 0.0
        for j in range(cols):
            out[i, j] = exp(m[i, j] - mx)
            s += out[i, j]
        for j in range(cols):
            out[i, j] /= s
    return out_arr


def gauss_logpdf_grad(double[:, ::1] x, double[:, ::1] mean,
                      double[:, ::1] scale):
    """Diagonal-Gaussian log-density summed per row, with gradients."""
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    logp_arr = np.empty(rows)
    dmean_arr = np.empty((rows, cols))
    dscale_arr = np.empty((rows, cols))
    dx_arr = np.empty((rows, cols))
    cdef double[::1] logp = logp_arr
    cdef double[:, ::1] dmean = dmean_arr, dscale = dscale_arr, dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double z, s, acc
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            s = scale[i, j]
            z = (x[i, j] - mean[i, j]) / s
            acc += -0.5 * z * z - log(s) - 0.5 * _LOG_2PI
            dx[i, j] = -z / s
            dmean[i, j] = z / s
            dscale[i, j] = (z * z - 1.0) / s
        logp[i] = acc
    return logp_arr, dmean_arr, dscale_arr, dx_arr


cdef inline void _cb_log_norm_one(double lam, double* val, double* dval):
    cdef double u = 1.0 - 2.0 * lam
    cdef double at, u2
    if u < _CB_TAYLOR_EDGE and u > -_CB_TAYLOR_EDGE:
        u2 = u * u
        val[0] = _LOG_2 + u2 / 3.0 + 13.0 / 90.0 * u2 * u2
        dval[0] = -2.0 * (2.0 * u / 3.0 + 26.0 / 45.0 * u2 * u)
    else:
        at = atanh(u)
        val[0] = log(2.0 * at / u)
        dval[0] = -2.0 * (1.0 / (at * (1.0 - u * u)) - 1.0 / u)


def cb_log_norm_grad(double[::1] lam):
    """Log-normalizer of the continuous Bernoulli and its derivative."""
    cdef Py_ssize_t n = lam.shape[0]
    val_arr = np.empty(n)
    dval_arr = np.empty(n)
    cdef double[::1] val = val_arr, dval = dval_arr
    cdef Py_ssize_t i
    cdef double v, d
    for i in range(n):
        _cb_log_norm_one(lam[i], &v, &d)
        val[i] = v
        dval[i] = d
    return val_arr, dval_arr


def cb_logpdf_grad(double[:, ::1] x, double[:, ::1] lam):
    """Continuous-Bernoulli log-density summed per row, with d/dlam."""
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    logp_arr = np.empty(rows)
    dlam_arr = np.empty((rows, cols))
    cdef double[::1] logp = logp_arr
    cdef double[:, ::1] dlam = dlam_arr
    cdef Py_ssize_t i, j
    cdef double acc, c, dc, l, xv
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            l = lam[i, j]
            xv = x[i, j]
            _cb_log_norm_one(l, &c, &dc)
            acc += c + xv * log(l) + (1.0 - xv) * log1p(-l)
            dlam[i, j] = dc + xv / l - (1.0 - xv) / (1.0 - l)
        logp[i] = acc
    return logp_arr, dlam_arr
