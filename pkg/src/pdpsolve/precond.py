"""Preconditioners.

Damped Jacobi, a geometric multigrid V-cycle on the structured Poisson grids,
Chebyshev semi-iteration as a fixed linear approximation of ``A^-1``, spectral
interval estimation from cg coefficients, and the block-triangular constraint
preconditioner for the optimal-control KKT system.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._backend import kernels
from .core import BlockVecZ, SparseMat, as_operator, as_vec, dual_pairing
from .errors import BreakdownError, ConfigurationError, IndefinitePreconditionerError
from .problems import _is_power_of_two, poisson_matrix

Operator = Callable[[np.ndarray], np.ndarray]

SAFETY = 1.05


def counted(fn: Operator, counter: Counter | None, key: str) -> Operator:
    """Wrap ``fn`` so every call increments ``counter[key]``."""
    if counter is None:
        return fn

    def wrapped(v):
        counter[key] += 1
        return fn(v)

    wrapped.__wrapped__ = fn
    return wrapped


# ---------------------------------------------------------------------------------
# Jacobi


def jacobi_apply(A: SparseMat, r, weight=1.0) -> np.ndarray:
    """``weight * diag(A)^-1 r``."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise ValueError("Jacobi needs a strictly positive diagonal")
    return weight * as_vec(r) / d


# ---------------------------------------------------------------------------------
# multigrid


def full_weighting(n_fine) -> SparseMat:
    """Restriction from interior nodes of an ``n_fine`` grid to ``n_fine/2``."""
    nc = n_fine // 2
    mf, mc = n_fine - 1, nc - 1
    r1 = sp.lil_matrix((mc, mf))
    for i in range(mc):
        f = 2 * i + 1  # fine index of the coarse node (0-based interior)
        r1[i, f - 1] = 0.25
        r1[i, f] = 0.5
        r1[i, f + 1] = 0.25
    r1 = r1.tocsr()
    return SparseMat.from_scipy(sp.kron(r1, r1))


@dataclass(frozen=True)
class MgLevel:
    A: SparseMat
    restriction: SparseMat | None  # to the next coarser level
    prolongation: SparseMat | None


@dataclass(frozen=True)
class MgHierarchy:
    """Nested grids, finest first. The coarsest level is solved by Cholesky."""

    levels: tuple
    smoother: float = 0.8
    pre_steps: int = 1
    post_steps: int = 1

    def __post_init__(self):
        coarse = self.levels[-1].A
        object.__setattr__(self, "_coarse", sla.cho_factor(coarse.to_dense()))

    @property
    def depth(self) -> int:
        return len(self.levels)

    def __call__(self, r):
        return mg_vcycle(self, r)


def build_mg_hierarchy(n_cells, shift=0.0, weight=0.8, pre_steps=1, post_steps=1,
                       coarsest_max=25) -> MgHierarchy:
    """Rediscretized 5-point operators (plus ``shift * I``) on nested grids."""
    if n_cells < 2 or not _is_power_of_two(n_cells):
        raise ConfigurationError("multigrid needs n_cells a power of two")
    levels = []
    n = n_cells
    while True:
        A = poisson_matrix(n, shift)
        if (n - 1) ** 2 <= coarsest_max or n <= 2:
            levels.append(MgLevel(A, None, None))
            break
        R = full_weighting(n)
        # bilinear interpolation is 4 R^T in two dimensions
        levels.append(MgLevel(A, R, R.transpose().scaled(4.0)))
        n //= 2
    return MgHierarchy(tuple(levels), weight, pre_steps, post_steps)


def _vcycle(H: MgHierarchy, lvl: int, b: np.ndarray) -> np.ndarray:
    level = H.levels[lvl]
    if lvl == H.depth - 1:
        return sla.cho_solve(H._coarse, b)
    A = level.A
    d = A.diagonal()
    x = np.zeros_like(b)
    for _ in range(H.pre_steps):
        x = kernels.jacobi_sweep(A.indptr, A.indices, A.data, d, b, x, H.smoother)
    res = b - A.matvec(x)
    x = x + level.prolongation.matvec(_vcycle(H, lvl + 1, level.restriction.matvec(res)))
    for _ in range(H.post_steps):
        x = kernels.jacobi_sweep(A.indptr, A.indices, A.data, d, b, x, H.smoother)
    return x


def mg_vcycle(H: MgHierarchy, r) -> np.ndarray:
    """One V(pre, post) cycle for ``A x = r`` from a zero initial guess."""
    if H.depth < 1:
        raise ConfigurationError("empty hierarchy")
    return _vcycle(H, 0, as_vec(r))


# ---------------------------------------------------------------------------------
# spectral estimation


@dataclass(frozen=True)
class SpectralInterval:
    sigma_min: float
    sigma_max: float
    safety: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError(f"invalid interval [{self.sigma_min}, {self.sigma_max}]")

    @property
    def kappa(self) -> float:
        return self.sigma_max / self.sigma_min


def lanczos_tridiagonal(alphas, betas) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of ``T_k`` from cg step sizes and update factors.

    ``betas[i]`` is the factor in ``d_{i+1} = g_{i+1} + beta_i d_i``; only the
    first ``len(alphas) - 1`` are used.
    """
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)[: max(len(a) - 1, 0)]
    if a.size == 0:
        raise BreakdownError("no cg steps recorded")
    if np.any(a <= 0):
        raise BreakdownError("nonpositive cg step size: operator or preconditioner indefinite")
    if np.any(b < 0):
        raise BreakdownError("negative cg update factor")
    if b.size < a.size - 1:
        raise ValueError("need len(betas) >= len(alphas) - 1")
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    return diag, off


def ritz_values(alphas, betas) -> np.ndarray:
    diag, off = lanczos_tridiagonal(alphas, betas)
    if diag.size == 1:
        return diag.copy()
    return sla.eigh_tridiagonal(diag, off, eigvals_only=True)


def estimate_spectrum(alphas, betas, safety=SAFETY) -> SpectralInterval:
    """Extreme Ritz values of ``T_k``, widened by ``safety`` on both ends."""
    ev = ritz_values(alphas, betas)
    lo, hi = float(ev[0]), float(ev[-1])
    if lo <= 0:
        raise BreakdownError("nonpositive Ritz value")
    return SpectralInterval(lo / safety, hi * safety, safety)


# ---------------------------------------------------------------------------------
# Chebyshev semi-iteration


def chebyshev_bound(kappa, k) -> float:
    """``2 / (rho^k + rho^-k)`` with ``rho = (sqrt(kappa)-1)/(sqrt(kappa)+1)``."""
    if k == 0:
        return 1.0
    sk = math.sqrt(kappa)
    rho = (sk - 1.0) / (sk + 1.0)
    if rho == 0.0:
        return 0.0
    # 1/cosh(k log(1/rho)) avoids overflow of rho^-k
    t = k * math.log(1.0 / rho)
    return 0.0 if t > 700 else 1.0 / math.cosh(t)


def chebyshev_degree(interval: SpectralInterval, accuracy, max_degree=10_000) -> int:
    """Smallest k whose Chebyshev error bound is at most ``accuracy``."""
    if not 0 < accuracy <= 1:
        raise ValueError("accuracy must lie in (0, 1]")
    k = 0
    while chebyshev_bound(interval.kappa, k) > accuracy:
        k += 1
        if k > max_degree:
            raise ConfigurationError("accuracy not reachable within max_degree")
    return k


@dataclass(frozen=True)
class ChebyshevOperator:
    """Fixed linear map ``p_k(Q^-1 A)`` approximating ``A^-1``.

    Degree 0 is the optimal single scaled step ``2/(s_min + s_max) Q^-1``; it
    coincides with degree 1.
    """

    base_A: Operator
    base_Q: Operator
    interval: SpectralInterval
    degree: int

    def __call__(self, r):
        return chebyshev_apply(self, r)

    @property
    def q_applications(self) -> int:
        return max(self.degree, 1)


def chebyshev_apply(C: ChebyshevOperator, r) -> np.ndarray:
    r = as_vec(r).copy()
    lmin, lmax = C.interval.sigma_min, C.interval.sigma_max
    theta = 0.5 * (lmax + lmin)
    delta = 0.5 * (lmax - lmin)
    A, Q = as_operator(C.base_A), as_operator(C.base_Q)
    x = np.zeros_like(r)
    p = None
    alpha = 0.0
    for i in range(C.q_applications):
        z = Q(r)
        if i == 0:
            p = z
            alpha = 1.0 / theta
        else:
            beta = (0.5 if i == 1 else 0.25) * (delta * alpha) ** 2
            alpha = 1.0 / (theta - beta / alpha)
            p = z + beta * p
        x = x + alpha * p
        if i + 1 < C.q_applications:
            r = r - alpha * A(p)
    return x


# ---------------------------------------------------------------------------------
# constraint preconditioner


@dataclass(frozen=True)
class ConstraintPrecond:
    """Block-triangular ``Q~ = [[0, 0, A~^T], [0, M~_u, -B^T], [A~, -B, 0]]``,
    applied through ``A~^-1``, ``A~^-T`` and ``M~_u^-1`` only."""

    a_inv_apply: Operator
    a_inv_adjoint_apply: Operator
    m_u_tilde_solve: Operator
    B: SparseMat


def constraint_precond_apply(Q: ConstraintPrecond, r: BlockVecZ, tol=1e-12):
    """Return ``g = -Q~^-1 r`` and the curvature ``<M~_u g_u, g_u>``.

    The curvature is evaluated from intermediate quantities as
    ``<r_u + B^T Q~^-1 r|_p, Q~^-1 r|_u>``; for ``r_p = 0`` it equals
    ``-<r, g>``.
    """
    gp = Q.a_inv_adjoint_apply(r.y)
    rhs_u = r.u + Q.B.rmatvec(gp)
    gu = Q.m_u_tilde_solve(rhs_u)
    gy = Q.a_inv_apply(r.p + Q.B.matvec(gu))
    curv = dual_pairing(rhs_u, gu)
    if curv < 0 and curv < -tol * np.linalg.norm(rhs_u) * np.linalg.norm(gu):
        raise IndefinitePreconditionerError(f"M~_u curvature {curv:.3e} < 0")
    return BlockVecZ(-gy, -gu, -gp), max(curv, 0.0)


# ---------------------------------------------------------------------------------
# mass preconditioner


def gershgorin_interval(M: SparseMat) -> SpectralInterval | None:
    """Bounds for the spectrum of ``D^-1 M`` from Gershgorin discs of the
    symmetrically scaled matrix; None when the lower bound is not positive."""
    d = M.diagonal()
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s) @ M.to_scipy() @ sp.diags(s)
    off = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(S.diagonal())
    lo, hi = float(np.min(1.0 - off)), float(np.max(1.0 + off))
    if lo <= 0:
        return None
    return SpectralInterval(lo, hi)


def mass_precond(M_u: SparseMat, degree=5, counter: Counter | None = None) -> Operator:
    """Approximate ``M_u^-1``: exact for diagonal masses, otherwise a
    Jacobi-preconditioned Chebyshev map of the given degree."""
    d = M_u.diagonal()
    if np.any(d <= 0):
        raise ValueError("mass matrix needs a positive diagonal")
    if M_u.is_diagonal():
        return counted(lambda v: as_vec(v) / d, counter, "mu_solves")
    interval = gershgorin_interval(M_u)
    if interval is None:
        from .krylov import pcg  # local: krylov depends on this module

        rng = np.random.default_rng(0)
        _, trace = pcg(M_u, lambda v: v / d, rng.standard_normal(M_u.shape[0]), 1e-12, 40)
        interval = estimate_spectrum(trace.alphas, trace.betas)
    cheb = ChebyshevOperator(M_u.matvec, lambda v: v / d, interval, degree)
    return counted(cheb, counter, "mu_solves")
