"""Vectors, compressed sparse matrices, block vectors and energy norms.

Vectors are plain 1-D float64 numpy arrays holding coordinates with respect to
a fixed basis. Primal vectors and functionals share this representation, and
the dual pairing is the coordinate sum ``l @ v``. With that convention the
adjoint of a matrix is its transpose, which :class:`SparseMat` applies
directly from row-compressed storage.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from ._backend import kernels
from .errors import DimensionError, NonConvexityError

__all__ = [
    "SparseMat",
    "BlockVecX",
    "BlockVecZ",
    "dual_pairing",
    "spmv",
    "energy_norm",
    "as_operator",
    "read_matrix_market",
    "write_matrix_market",
    "read_vector",
    "write_vector",
]


def as_vec(v) -> np.ndarray:
    return np.ascontiguousarray(v, dtype=np.float64).reshape(-1)


class SparseMat:
    """Immutable CSR matrix.

    Column indices are strictly increasing within each row. ``matvec`` and
    ``rmatvec`` dispatch to the compiled kernels when available.
    """

    __slots__ = ("shape", "indptr", "indices", "data", "_diag")

    def __init__(self, indptr, indices, data, shape):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        nrows, ncols = int(shape[0]), int(shape[1])
        if indptr.shape != (nrows + 1,) or indptr[0] != 0 or indptr[-1] != data.shape[0]:
            raise DimensionError("indptr inconsistent with shape/data")
        if indices.shape != data.shape:
            raise DimensionError("indices and data differ in length")
        if data.size:
            if indices.min() < 0 or indices.max() >= ncols:
                raise DimensionError("column index out of range")
            # strictly increasing within rows: every in-row step must be positive
            steps = np.diff(indices)
            row_start = np.zeros(data.shape[0], dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any(steps[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        self.indptr, self.indices, self.data = indptr, indices, data
        self.shape = (nrows, ncols)
        self._diag = None

    # construction -----------------------------------------------------------------
    @classmethod
    def from_scipy(cls, mat) -> "SparseMat":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.indptr, csr.indices, csr.data, csr.shape)

    @classmethod
    def from_dense(cls, arr, drop_zeros=True) -> "SparseMat":
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        csr = sp.csr_matrix(arr)
        if not drop_zeros:
            rows, cols = np.indices(arr.shape)
            csr = sp.csr_matrix((arr.ravel(), (rows.ravel(), cols.ravel())), shape=arr.shape)
        return cls.from_scipy(csr)

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape) -> "SparseMat":
        """Duplicate (row, col) entries are summed."""
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=shape))

    @classmethod
    def identity(cls, n, scale=1.0) -> "SparseMat":
        return cls.from_scipy(sp.identity(n, format="csr") * scale)

    @classmethod
    def diag(cls, values) -> "SparseMat":
        return cls.from_scipy(sp.diags(as_vec(values), format="csr"))

    # queries ----------------------------------------------------------------------
    @property
    def nnz(self) -> int:
        return int(self.data.shape[0])

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            self._diag = self.to_scipy().diagonal().copy()
        return self._diag

    def is_diagonal(self) -> bool:
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return bool(np.all(rows == self.indices))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMat":
        return SparseMat.from_scipy(self.to_scipy().T)

    T = property(transpose)

    def scaled(self, alpha) -> "SparseMat":
        return SparseMat(self.indptr, self.indices, alpha * self.data, self.shape)

    def __add__(self, other):
        if not isinstance(other, SparseMat):
            return NotImplemented
        if other.shape != self.shape:
            raise DimensionError(f"cannot add {self.shape} and {other.shape}")
        return SparseMat.from_scipy(self.to_scipy() + other.to_scipy())

    def __matmul__(self, other):
        if isinstance(other, SparseMat):
            if self.shape[1] != other.shape[0]:
                raise DimensionError(f"cannot multiply {self.shape} by {other.shape}")
            return SparseMat.from_scipy(self.to_scipy() @ other.to_scipy())
        return self.matvec(other)

    def __repr__(self):
        return f"SparseMat(shape={self.shape}, nnz={self.nnz})"

    # application ------------------------------------------------------------------
    def matvec(self, v) -> np.ndarray:
        v = as_vec(v)
        if v.shape[0] != self.shape[1]:
            raise DimensionError(f"matvec: matrix has {self.shape[1]} columns, vector {v.shape[0]}")
        return kernels.csr_matvec(self.indptr, self.indices, self.data, v)

    def rmatvec(self, v) -> np.ndarray:
        """Transpose product, scattered from row storage."""
        v = as_vec(v)
        if v.shape[0] != self.shape[0]:
            raise DimensionError(f"rmatvec: matrix has {self.shape[0]} rows, vector {v.shape[0]}")
        return kernels.csr_rmatvec(self.indptr, self.indices, self.data, v, self.shape[1])

    __call__ = matvec


def spmv(A: SparseMat, v, adjoint: bool = False) -> np.ndarray:
    """``A v`` or, with ``adjoint=True``, ``A^T v``."""
    return A.rmatvec(v) if adjoint else A.matvec(v)


def dual_pairing(l, v) -> float:
    l, v = as_vec(l), as_vec(v)
    if l.shape != v.shape:
        raise DimensionError(f"pairing of lengths {l.shape[0]} and {v.shape[0]}")
    return float(l @ v)


def as_operator(A):
    """Wrap a SparseMat, dense array or callable as ``v -> A v``."""
    if A is None:
        return lambda v: as_vec(v).copy()
    if isinstance(A, SparseMat):
        return A.matvec
    if isinstance(A, np.ndarray):
        return lambda v: A @ v
    if sp.issparse(A):
        return lambda v: A @ v
    if callable(A):
        return A
    raise TypeError(f"cannot use {type(A).__name__} as a linear operator")


# ---------------------------------------------------------------------------------
# block vectors


@dataclass(frozen=True)
class BlockVecX:
    """Primal pair ``x = (y, u)`` of state and control coordinates."""

    y: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", as_vec(self.y))
        object.__setattr__(self, "u", as_vec(self.u))

    @classmethod
    def zeros(cls, ny, nu):
        return cls(np.zeros(ny), np.zeros(nu))

    @classmethod
    def from_flat(cls, flat, ny):
        flat = as_vec(flat)
        return cls(flat[:ny], flat[ny:])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.y, self.u])

    def dot(self, other: "BlockVecX") -> float:
        return dual_pairing(self.y, other.y) + dual_pairing(self.u, other.u)

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))

    def __add__(self, o):
        return BlockVecX(self.y + o.y, self.u + o.u)

    def __sub__(self, o):
        return BlockVecX(self.y - o.y, self.u - o.u)

    def __neg__(self):
        return BlockVecX(-self.y, -self.u)

    def __mul__(self, a):
        return BlockVecX(a * self.y, a * self.u)

    __rmul__ = __mul__


@dataclass(frozen=True)
class BlockVecZ:
    """Triple ``z = (y, u, p)``; ``z.x`` is the primal part."""

    y: np.ndarray
    u: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("y", "u", "p"):
            object.__setattr__(self, name, as_vec(getattr(self, name)))

    @classmethod
    def zeros(cls, ny, nu, np_=None):
        return cls(np.zeros(ny), np.zeros(nu), np.zeros(ny if np_ is None else np_))

    @classmethod
    def from_x(cls, x: BlockVecX, p):
        return cls(x.y, x.u, p)

    @classmethod
    def from_flat(cls, flat, ny, nu):
        flat = as_vec(flat)
        return cls(flat[:ny], flat[ny : ny + nu], flat[ny + nu :])

    @property
    def x(self) -> BlockVecX:
        return BlockVecX(self.y, self.u)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.y, self.u, self.p])

    def dot(self, other: "BlockVecZ") -> float:
        return dual_pairing(self.flat(), other.flat())

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def __add__(self, o):
        return BlockVecZ(self.y + o.y, self.u + o.u, self.p + o.p)

    def __sub__(self, o):
        return BlockVecZ(self.y - o.y, self.u - o.u, self.p - o.p)

    def __neg__(self):
        return BlockVecZ(-self.y, -self.u, -self.p)

    def __mul__(self, a):
        return BlockVecZ(a * self.y, a * self.u, a * self.p)

    __rmul__ = __mul__


def _pair_any(l, v) -> float:
    if isinstance(l, (BlockVecX, BlockVecZ)):
        return l.dot(v)
    return dual_pairing(l, v)


def _norm_any(v) -> float:
    if isinstance(v, (BlockVecX, BlockVecZ)):
        return v.norm()
    return float(np.linalg.norm(v))


def energy_norm(b_apply, x, tol_neg=1e-12) -> float:
    """``sqrt(<b x, x>)``.

    Raises :class:`NonConvexityError` when the pairing is below
    ``-tol_neg * |b x| |x|``; tiny negative values from rounding give 0.
    """
    bx = b_apply(x)
    val = _pair_any(bx, x)
    if val < 0.0:
        if val < -tol_neg * _norm_any(bx) * _norm_any(x):
            raise NonConvexityError(f"negative energy {val:.3e}")
        return 0.0
    return float(np.sqrt(val))


# ---------------------------------------------------------------------------------
# file formats


def write_matrix_market(path, A: SparseMat, comment=""):
    scipy.io.mmwrite(str(path), A.to_scipy().tocoo(), comment=comment, field="real", precision=17)


def read_matrix_market(path) -> SparseMat:
    return SparseMat.from_scipy(scipy.io.mmread(str(path)))


def write_vector(path, v):
    np.savetxt(str(path), as_vec(v), fmt="%.17g")


def read_vector(path) -> np.ndarray:
    text = Path(path).read_text().split()
    return np.array([float(t) for t in text], dtype=np.float64)
