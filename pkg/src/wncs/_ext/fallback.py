"""Pure-numpy versions of the compiled kernels, with identical signatures."""

import numpy as np

from ..aoi import advance_rows as _advance


def advance_rows(rows, beta, gamma, v, cap):
    return _advance(rows, np.asarray(beta, dtype=bool), np.asarray(gamma, dtype=bool), v, cap)


def expect_rows(indptr, indices, probs, values):
    weighted = probs * np.asarray(values)[indices]
    return np.add.reduceat(weighted, indptr[:-1]) if weighted.size else np.zeros(len(indptr) - 1)
