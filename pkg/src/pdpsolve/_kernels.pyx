# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels. Mirrors :mod:`pdpsolve._pykernels` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(nrows, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(nrows):
            acc = 0.0
            for j in range(indptr[i], indptr[i + 1]):
                acc = acc + data[j] * x[indices[j]]
            y[i] = acc
    return out


def csr_rmatvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[::1] data, const double[::1] x, Py_ssize_t ncols):
    # scatter form: y[col] += a_ij * x[row], no transpose is materialized
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double xi
    out = np.zeros(ncols, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(nrows):
            xi = x[i]
            for j in range(indptr[i], indptr[i + 1]):
                y[indices[j]] = y[indices[j]] + data[j] * xi
    return out


def jacobi_sweep(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                 const double[::1] data, const double[::1] diag,
                 const double[::1] b, const double[::1] x, double weight):
    """One damped Jacobi update ``x + weight * D^-1 (b - A x)``."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(nrows, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(nrows):
            acc = 0.0
            for j in range(indptr[i], indptr[i + 1]):
                acc = acc + data[j] * x[indices[j]]
            y[i] = x[i] + weight * (b[i] - acc) / diag[i]
    return out
