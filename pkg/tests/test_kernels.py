import os
import subprocess
import sys

import numpy as np
import pytest

from wncs import kernels
from wncs._ext import fallback

compiled = pytest.importorskip("wncs._ext.kernels")


def test_backend_selected():
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    out = subprocess.run([sys.executable, "-c", "import wncs.kernels as k; print(k.BACKEND)"],
                         env={**os.environ, "WNCS_PURE_PYTHON": "1"}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("v,cap", [(1, 4), (2, 20), (3, 2**62)])
def test_advance_rows_agree(v, cap):
    rng = np.random.default_rng(v)
    rows = rng.integers(1, 9, (500, 2 * v + 3)).astype(np.int64)
    beta = rng.random(500) < 0.5
    gamma = rng.random(500) < 0.5
    a = kernels.advance_rows(rows, beta, gamma, v, cap, impl=compiled)
    b = kernels.advance_rows(rows, beta, gamma, v, cap, impl=fallback)
    assert np.array_equal(a, b)


def test_expect_rows_agree():
    rng = np.random.default_rng(0)
    counts = rng.integers(1, 5, 300)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = rng.integers(0, 50, indptr[-1]).astype(np.int64)
    probs = rng.random(indptr[-1])
    values = rng.normal(size=50)
    a = kernels.expect_rows(indptr, indices, probs, values, impl=compiled)
    b = kernels.expect_rows(indptr, indices, probs, values, impl=fallback)
    ref = [probs[indptr[i]:indptr[i + 1]] @ values[indices[indptr[i]:indptr[i + 1]]] for i in range(300)]
    assert np.allclose(a, ref, rtol=0, atol=1e-13) and np.allclose(b, ref, rtol=0, atol=1e-13)
