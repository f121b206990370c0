"""Numeric hot kernels: compiled core with a NumPy fallback.

The compiled extension (``_core``) is preferred when importable; otherwise
the NumPy reference (``_ref``) is used.  ``FREECAT_KERNELS=ref`` forces the
fallback and ``FREECAT_KERNELS=ext`` makes a missing extension an error,
which the tests and the benchmark use to pin a backend.
"""

import os

from . import _ref

_impl = None
_choice = os.environ.get("FREECAT_KERNELS", "auto")
if _choice not in ("auto", "ext", "ref"):
    raise ValueError(f"FREECAT_KERNELS must be auto, ext or ref, got {_choice!r}")
if _choice in ("auto", "ext"):
    try:
        from . import _core as _impl
    except ImportError:
        if _choice == "ext":
            raise
        _impl = None
if _impl is None:
    _impl = _ref

BACKEND = "ext" if _impl is not _ref else "ref"

row_softmax = _impl.row_softmax
gauss_logpdf_grad = _impl.gauss_logpdf_grad
cb_log_norm_grad = _impl.cb_log_norm_grad
cb_logpdf_grad = _impl.cb_logpdf_grad

LOG_2PI = _ref.LOG_2PI
