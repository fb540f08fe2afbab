"""Pure numpy CSR kernels, used when the compiled extension is unavailable.

Accumulation happens in storage order (``np.bincount`` sums sequentially),
so results match the compiled kernels bit for bit.
"""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x):
    nrows = indptr.shape[0] - 1
    if data.shape[0] == 0:
        return np.zeros(nrows)
    return np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=nrows)


def csr_rmatvec(indptr, indices, data, x, ncols):
    if data.shape[0] == 0:
        return np.zeros(ncols)
    return np.bincount(indices, weights=data * x[_row_ids(indptr)], minlength=ncols)


def jacobi_sweep(indptr, indices, data, diag, b, x, weight):
    """One damped Jacobi update ``x + weight * D^-1 (b - A x)``."""
    return x + weight * (b - csr_matvec(indptr, indices, data, x)) / diag
