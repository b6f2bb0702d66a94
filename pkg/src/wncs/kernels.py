"""Kernel dispatch: use the compiled extension when it was built.

Set ``WNCS_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from ._ext import fallback

BACKEND = "python"
_impl = fallback
if os.environ.get("WNCS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def advance_rows(rows, beta, gamma, v, cap, impl=None):
    """Advance a batch of register rows by one slot and saturate at ``cap``."""
    impl = impl or _impl
    return impl.advance_rows(np.ascontiguousarray(rows, dtype=np.int64),
                             np.ascontiguousarray(beta, dtype=np.uint8),
                             np.ascontiguousarray(gamma, dtype=np.uint8), int(v), int(cap))


def expect_rows(indptr, indices, probs, values, impl=None):
    """Row-wise expectations of ``values`` under a CSR transition matrix."""
    impl = impl or _impl
    return impl.expect_rows(np.ascontiguousarray(indptr, dtype=np.int64),
                            np.ascontiguousarray(indices, dtype=np.int64),
                            np.ascontiguousarray(probs, dtype=np.float64),
                            np.ascontiguousarray(values, dtype=np.float64))
