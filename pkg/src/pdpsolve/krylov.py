"""Inner linear solvers: pcg, projected pcg, modified projected pcg, MINRES."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import BlockVecX, BlockVecZ, SparseMat, as_operator, as_vec, dual_pairing
from .errors import (
    ConfigurationError,
    DimensionError,
    IndefinitePreconditionerError,
    InfeasibleStartError,
    NonConvexityError,
)
from .precond import ConstraintPrecond, constraint_precond_apply, counted
from .problems import KktProblem, kkt_apply

DEFAULT_MAX_ITER = 2000


@dataclass
class CgTrace:
    """Coefficients of a pcg run.

    ``alphas`` and ``betas`` have equal length: ``betas[i]`` is computed right
    after ``alphas[i]``. ``residual_norms`` holds the ``Q^-1``-norm of the
    residual, starting with the initial one.
    """

    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.alphas)


@dataclass
class SolverReport:
    method: str
    iterations: int = 0
    converged: bool = False
    precond_applications: Counter = field(default_factory=Counter)
    residual_history: list = field(default_factory=list)
    curvature_failures: int = 0
    info: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0

    CSV_COLUMNS = ("method", "iterations", "converged", "q_a_applies", "a_inv_applies", "mu_solves",
                   "final_residual")

    def csv_row(self) -> str:
        c = self.precond_applications
        vals = (self.method, self.iterations, int(self.converged), c.get("q_a_applies", 0),
                c.get("a_inv_applies", 0), c.get("mu_solves", 0), f"{self.final_residual:.6e}")
        return ",".join(str(v) for v in vals)


# ---------------------------------------------------------------------------------
# pcg


def pcg(A, Q, b, rel_tol=1e-8, max_iter=DEFAULT_MAX_ITER, min_iter=0):
    """Preconditioned cg from a zero initial guess.

    Stops when ``|r|_{Q^-1} <= rel_tol * |b|_{Q^-1}`` (but not before
    ``min_iter`` steps unless the residual vanishes). Returns ``(x, trace)``;
    on hitting ``max_iter`` the partial iterate is returned with
    ``trace.converged = False``.
    """
    A, Q = as_operator(A), as_operator(Q)
    b = as_vec(b)
    x = np.zeros_like(b)
    trace = CgTrace()
    r = b.copy()
    z = Q(r)
    rz = dual_pairing(r, z)
    if rz < 0:
        raise IndefinitePreconditionerError("<Q^-1 r, r> < 0")
    ref = math.sqrt(rz)
    trace.residual_norms.append(ref)
    if ref == 0.0:
        trace.converged = True
        return x, trace
    d = z
    for k in range(max_iter):
        Ad = A(d)
        dAd = dual_pairing(d, Ad)
        if dAd <= 0:
            raise NonConvexityError(f"pcg: nonpositive curvature {dAd:.3e}")
        alpha = rz / dAd
        x = x + alpha * d
        r = r - alpha * Ad
        z = Q(r)
        rz_new = dual_pairing(r, z)
        if rz_new < 0:
            if rz_new < -1e-12 * np.linalg.norm(r) * np.linalg.norm(z):
                raise IndefinitePreconditionerError("<Q^-1 r, r> < 0")
            rz_new = 0.0
        beta = rz_new / rz
        trace.alphas.append(alpha)
        trace.betas.append(beta)
        rz = rz_new
        res = math.sqrt(rz)
        trace.residual_norms.append(res)
        if res == 0.0 or (res <= rel_tol * ref and k + 1 >= min_iter):
            trace.converged = True
            break
        d = z + beta * d
    return x, trace


# ---------------------------------------------------------------------------------
# projected pcg


def _check_rhs(P: KktProblem, s: BlockVecZ | None) -> BlockVecZ:
    s = P.rhs() if s is None else s
    if s.y.shape[0] != P.n_state or s.u.shape[0] != P.n_control:
        raise DimensionError("rhs does not match problem")
    if np.any(s.p != 0):
        raise ValueError("projected cg requires s_p = 0")
    return s


def _M_x(P: KktProblem, d: BlockVecZ) -> BlockVecX:
    return BlockVecX(P.M_y.matvec(d.y), P.M_u.matvec(d.u))


def ppcg(P: KktProblem, Q: ConstraintPrecond, s: BlockVecZ | None = None, z0: BlockVecZ | None = None,
         rel_tol=1e-10, max_iter=DEFAULT_MAX_ITER, callback=None):
    """Projected preconditioned cg for ``H z = s`` with a constraint preconditioner.

    ``Q`` must be built with the exact ``A`` for iterates to stay in ``ker C``.
    Stops once ``sqrt(<r_k, g_k> / <r_0, g_0>) <= rel_tol``. ``callback(k, z)``
    sees every iterate, starting with ``z0``.
    """
    s = _check_rhs(P, s)
    z = P.zeros() if z0 is None else z0
    scale = np.linalg.norm(z.y) * _norm1(P.A) + np.linalg.norm(z.u) * _norm1(P.B)
    if np.linalg.norm(P.C_apply(z.x)) > 1e-10 * max(scale, 1e-300):
        raise InfeasibleStartError("ppcg needs C z0_x = 0")
    report = SolverReport("ppcg")
    r = kkt_apply(P, z) - s
    g, curv = constraint_precond_apply(Q, r)
    report.residual_history.append(math.sqrt(curv))
    if callback:
        callback(0, z)
    if curv == 0.0:
        report.converged = True
        return z, report
    ref = curv
    d = g
    for k in range(max_iter):
        Hd = kkt_apply(P, d)
        dMd = _M_x(P, d).dot(d.x)
        if dMd <= 0:
            report.curvature_failures += 1
            raise NonConvexityError(f"ppcg: <M d_x, d_x> = {dMd:.3e} <= 0")
        alpha = curv / dMd
        z = z + alpha * d
        r = r + alpha * Hd
        g, curv_new = constraint_precond_apply(Q, r)
        beta = curv_new / curv
        curv = curv_new
        report.iterations = k + 1
        report.residual_history.append(math.sqrt(curv))
        if callback:
            callback(k + 1, z)
        if curv <= rel_tol**2 * ref:
            report.converged = True
            break
        d = g + beta * d
    return z, report


def _norm1(A: SparseMat) -> float:
    return float(np.max(np.abs(A.to_scipy()).sum(axis=1))) if A.nnz else 0.0


def modified_ppcg(P: KktProblem, Q: ConstraintPrecond, s: BlockVecZ | None = None, rel_tol=1e-2,
                  max_iter=DEFAULT_MAX_ITER, callback=None, counter: Counter | None = None):
    """Projected cg on the surrogate system ``H~ z = s`` using only ``A~^-1``.

    The product ``A~^T d_p`` needed for ``H~ d`` is carried by the recursion
    ``w_{k+1} = -r_{k+1,y} + beta_k w_k``; neither ``A`` nor ``A~`` is applied.
    Starts from ``z0 = 0``. ``callback(k, d, w)`` is invoked for every search
    direction ``d_k`` with its ``w_k``.
    """
    s = _check_rhs(P, s)
    report = SolverReport("modified_ppcg", precond_applications=counter if counter is not None else Counter())
    z = P.zeros()
    if not (np.any(s.y) or np.any(s.u)):
        report.converged = True
        return z, report
    zero_p = np.zeros(P.n_state)
    r = BlockVecZ(-s.y, -s.u, zero_p)
    g, curv = constraint_precond_apply(Q, r)
    report.residual_history.append(math.sqrt(curv))
    if curv == 0.0:
        report.converged = True
        return z, report
    ref = curv
    d = g
    w = -r.y
    if callback:
        callback(0, d, w)
    for k in range(max_iter):
        Md = _M_x(P, d)
        dMd = Md.dot(d.x)
        if dMd <= 0:
            report.curvature_failures += 1
            raise NonConvexityError(f"modified ppcg: <M d_x, d_x> = {dMd:.3e} <= 0")
        alpha = curv / dMd
        z = z + alpha * d
        r = BlockVecZ(r.y + alpha * (Md.y + w), r.u + alpha * (Md.u - P.B.rmatvec(d.p)), zero_p)
        g, curv_new = constraint_precond_apply(Q, r)
        beta = curv_new / curv
        curv = curv_new
        report.iterations = k + 1
        report.residual_history.append(math.sqrt(curv))
        if curv <= rel_tol**2 * ref:
            report.converged = True
            break
        d = g + beta * d
        w = -r.y + beta * w
        if callback:
            callback(k + 1, d, w)
    return z, report


# ---------------------------------------------------------------------------------
# MINRES


def minres_preconditioner(P: KktProblem, kind, a_inv, m_u_tilde, a_inv_adjoint=None, m_y_tilde=None,
                          counter: Counter | None = None):
    """Block-diagonal ``Q1^-1 = diag(A~^-1, M~_u^-1, A~^-1)`` or
    ``Q2^-1 = diag(M~_y^-1, M~_u^-1, A~^-1 M_y A~^-T)`` on flat vectors."""
    ny, nc = P.n_state, P.n_control
    a_inv = counted(a_inv, counter, "a_inv_applies")
    a_inv_adjoint = a_inv if a_inv_adjoint is None else counted(a_inv_adjoint, counter, "a_inv_applies")
    if kind == "Q1":
        def apply(v):
            return np.concatenate([a_inv(v[:ny]), m_u_tilde(v[ny:ny + nc]), a_inv(v[ny + nc:])])
    elif kind == "Q2":
        if m_y_tilde is None:
            d = P.M_y.diagonal()
            if not P.M_y.is_diagonal() or np.any(d <= 0):
                raise ConfigurationError("Q2 needs an invertible M~_y")
            m_y_tilde = lambda v: v / d  # noqa: E731
        def apply(v):
            return np.concatenate([m_y_tilde(v[:ny]), m_u_tilde(v[ny:ny + nc]),
                                   a_inv(P.M_y.matvec(a_inv_adjoint(v[ny + nc:])))])
    else:
        raise ConfigurationError(f"unknown MINRES preconditioner {kind!r}")
    return apply


def minres(P: KktProblem, precond, rel_tol=1e-8, max_iter=DEFAULT_MAX_ITER, s: BlockVecZ | None = None,
           counter: Counter | None = None, method="minres"):
    """Preconditioned MINRES for ``H z = s`` from ``z0 = 0``.

    ``precond`` applies an SPD ``Q^-1`` to flat vectors. Stops when the
    ``Q^-1``-norm of the residual has dropped by ``rel_tol``; that norm is
    recorded in ``residual_history`` and never increases.
    """
    s = P.rhs() if s is None else s
    ny, nc = P.n_state, P.n_control
    b = s.flat()

    def H(v):
        return kkt_apply(P, BlockVecZ.from_flat(v, ny, nc)).flat()

    report = SolverReport(method, precond_applications=counter if counter is not None else Counter())
    x = np.zeros_like(b)
    v_old = np.zeros_like(b)
    v = b.copy()
    z = precond(v)
    gamma2 = dual_pairing(z, v)
    if gamma2 < 0:
        raise IndefinitePreconditionerError("MINRES preconditioner is not positive definite")
    gamma = math.sqrt(gamma2)
    report.residual_history.append(gamma)
    if gamma == 0.0:
        report.converged = True
        return BlockVecZ.from_flat(x, ny, nc), report
    eta, ref = gamma, gamma
    gamma_old = 1.0
    s_old = s_cur = 0.0
    c_old = c_cur = 1.0
    w_old = np.zeros_like(b)
    w = np.zeros_like(b)
    for j in range(max_iter):
        z = z / gamma
        Az = H(z)
        delta = dual_pairing(Az, z)
        v_new = Az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = precond(v_new)
        g2 = dual_pairing(z_new, v_new)
        if g2 < 0:
            if g2 < -1e-12 * np.linalg.norm(z_new) * np.linalg.norm(v_new):
                raise IndefinitePreconditionerError("MINRES preconditioner is not positive definite")
            g2 = 0.0
        gamma_new = math.sqrt(g2)
        a0 = c_cur * delta - c_old * s_cur * gamma
        a1 = math.hypot(a0, gamma_new)
        a2 = s_cur * delta + c_old * c_cur * gamma
        a3 = s_old * gamma
        c_new, s_new = a0 / a1, gamma_new / a1
        w_new = (z - a3 * w_old - a2 * w) / a1
        x = x + c_new * eta * w_new
        eta = -s_new * eta
        report.iterations = j + 1
        report.residual_history.append(abs(eta))
        if abs(eta) <= rel_tol * ref or gamma_new == 0.0:
            report.converged = True
            break
        v_old, v = v, v_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c_cur = c_cur, c_new
        s_old, s_cur = s_cur, s_new
        w_old, w = w, w_new
    return BlockVecZ.from_flat(x, ny, nc), report


def robust_surrogate(A: SparseMat, B: SparseMat, E: SparseMat | None, nu) -> SparseMat:
    """``A + nu^-1/2 B E``, a state operator that sees the local control effect."""
    if E is None:
        raise ConfigurationError("robust surrogate needs a state-to-control embedding (distributed control)")
    if not nu > 0:
        raise ConfigurationError("nu must be positive")
    if math.isinf(nu):
        return A
    return A + (B @ E).scaled(nu ** -0.5)
