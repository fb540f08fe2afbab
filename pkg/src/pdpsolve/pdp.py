"""Primal-dual projection (PDP) outer iterations.

``pdp_general`` works on abstract dense or operator data; ``pdp_oc`` is the
optimal-control variant that only needs approximate solves with ``A`` and a
fixed surrogate ``A~^-1``. ``quotient_steepest_descent`` is an independent
dense implementation of the same iteration seen as steepest descent on the
quotient space ``X/W``; it is used as a cross-check.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .core import BlockVecX, BlockVecZ, as_operator, as_vec, dual_pairing, energy_norm
from .errors import ConfigurationError, NonConvexityError, StagnationError, SubspaceConditionError
from .krylov import SolverReport, modified_ppcg, pcg, robust_surrogate
from .precond import (
    ChebyshevOperator,
    ConstraintPrecond,
    build_mg_hierarchy,
    chebyshev_degree,
    counted,
    estimate_spectrum,
    mass_precond,
)
from .problems import Codim1Problem, DenseToy, KktProblem

EPS = np.finfo(float).eps
# increments below this multiple of eps * (accumulated progress) count as zero
ZERO_INCREMENT = 64.0
THETA_CAP = 1.0 - 1e-12
ROLES = ("inner", "primal", "dual", "spectrum")


# ---------------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class QuadraticObjective:
    """``q(x) = 1/2 <b x, x> + <lin, x>``."""

    b_apply: Callable
    lin: np.ndarray
    base_point: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, b, lin, base_point=None):
        b = np.asarray(b, dtype=float)
        return cls(lambda v: b @ v, as_vec(lin), base_point)

    def grad(self, x):
        return self.b_apply(x) + self.lin

    def value(self, x) -> float:
        return 0.5 * dual_pairing(self.b_apply(x), x) + dual_pairing(self.lin, x)

    def b(self, v, w) -> float:
        return dual_pairing(self.b_apply(v), w)


@dataclass(frozen=True)
class SurrogateSpec:
    """``subspace_solver(f)`` returns ``argmin_{v in V~} 1/2 b~(v, v) + <f, v>``."""

    b_tilde_apply: Callable
    subspace_solver: Callable


@dataclass(frozen=True)
class ProjectionPair:
    apply: Callable
    apply_adjoint: Callable


@dataclass(frozen=True)
class PdpTolerances:
    lambda_pdp: float = 1e-8
    lambda_atil: float = 1e-2
    lambda_ppcg: float = 1e-2
    lambda_p: float = 1e-2
    lambda_pstar: float = 1e-2

    def __post_init__(self):
        for name in ("lambda_pdp", "lambda_atil", "lambda_ppcg", "lambda_p", "lambda_pstar"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {v!r}")

    @classmethod
    def common(cls, lam, lambda_pdp=1e-8, lambda_p=None):
        """All inner tolerances equal to ``lam``; ``lambda_p`` may be tightened."""
        return cls(lambda_pdp, lam, lam, lam if lambda_p is None else lambda_p, lam)


@dataclass(frozen=True)
class ProgressEstimate:
    theta_bar: float
    err_estimate: float
    lower_bound_e0: float
    increments: tuple
    converged: bool = False


# ---------------------------------------------------------------------------------
# estimators


def estimate_progress(increments, m=None, k=None) -> ProgressEstimate:
    """Rate, error and initial-error estimates from b-norm increments.

    ``increments[i]`` is ``|x_{i+1} - x_i|_b``; ``k`` defaults to the last one
    and ``m`` to ``k - 1``.
    """
    inc = tuple(float(v) for v in increments)
    if any(v < 0 for v in inc):
        raise ValueError("increments must be nonnegative")
    k = len(inc) - 1 if k is None else k
    m = k - 1 if m is None else m
    if not 0 <= m < k < len(inc):
        raise ValueError("need 0 <= m < k < len(increments)")
    lb = math.sqrt(sum(v * v for v in inc[: k + 1]))
    if inc[m] == 0.0 or inc[k] == 0.0:
        return ProgressEstimate(0.0, 0.0, lb, inc, converged=True)
    theta = min(max((inc[k] / inc[m]) ** (1.0 / (k - m)), 0.0), THETA_CAP)
    err = theta / math.sqrt(1.0 - theta * theta) * inc[k]
    return ProgressEstimate(theta, err, lb, inc)


def check_termination(est: ProgressEstimate, lambda_pdp) -> bool:
    if est.converged or est.err_estimate == 0.0:
        return True
    return est.err_estimate <= lambda_pdp * est.lower_bound_e0


def condition_bounds(norm_S, norm_S_tilde, eps, nu, kappa_U=1.0) -> dict:
    """Closed-form condition bounds for ppcg and the two PDP estimates."""
    if eps < 0 or nu <= 0:
        raise ValueError("need eps >= 0 and nu > 0")
    r = eps / math.sqrt(nu)
    return {
        "kappa_ppcg_bound": (norm_S**2 / nu + 1.0) * kappa_U,
        "kappa_pdp_general": (1.0 + norm_S**2 / nu) * (1.0 + norm_S_tilde**2 / nu),
        "kappa_pdp_eps": (1.0 + r + r * r) ** 2,
    }


# ---------------------------------------------------------------------------------
# general PDP


def dual_projection(q: QuadraticObjective, P: ProjectionPair, x):
    """``lambda = P* q'(x) - q'(x)``: vanishes on V, cancels q'(x) on W."""
    g = q.grad(x)
    return P.apply_adjoint(g) - g


def line_search(q: QuadraticObjective, x, dx) -> float:
    bdx = q.b_apply(dx)
    curv = dual_pairing(bdx, dx)
    if not curv > 0:
        raise NonConvexityError(f"b(dx, dx) = {curv:.3e} <= 0")
    return -dual_pairing(q.grad(x), dx) / curv


@dataclass
class PdpReport:
    method: str
    iterations: int = 0
    converged: bool = False
    terminated_by: str = ""
    increments: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    omegas: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)
    feasibility: list = field(default_factory=list)
    non_contraction: int = 0
    log: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def final_estimate(self) -> ProgressEstimate | None:
        return self.estimates[-1] if self.estimates else None

    def total_q_applications(self) -> int:
        return sum(self.counters.get(f"q_a_{r}", 0) for r in ROLES)

    def solver_report(self) -> SolverReport:
        c = Counter(self.counters)
        c["q_a_applies"] = self.total_q_applications()
        est = self.final_estimate
        hist = [est.err_estimate] if est else [0.0]
        return SolverReport(self.method, self.iterations, self.converged, c, hist)


LOG_COLUMNS = ("k", "increment_b_norm", "theta_bar", "err_estimate", "omega", "inner_iterations",
               "q_a_inner", "q_a_primal", "q_a_dual", "q_a_spectrum", "a_inv_applies", "mu_solves")


def _log_line(k, inc, est, omega, inner, counters) -> str:
    theta = est.theta_bar if est else float("nan")
    err = est.err_estimate if est else float("nan")
    vals = [str(k), f"{inc:.6e}", f"{theta:.6e}", f"{err:.6e}", f"{omega:.6e}", str(inner)]
    vals += [str(counters.get(key, 0)) for key in LOG_COLUMNS[6:]]
    return ",".join(vals)


def _record_step(report, inc, lambda_pdp, window):
    """Append an increment; return True when the termination test fires."""
    report.increments.append(inc)
    n = len(report.increments)
    if n < 2:
        return False
    k = n - 1
    m = max(k - window, 0)
    est = estimate_progress(report.increments, m, k)
    report.estimates.append(est)
    if report.increments[k] > report.increments[m]:
        report.non_contraction += 1
        return False
    return check_termination(est, lambda_pdp)


def pdp_general(q: QuadraticObjective, surrogate: SurrogateSpec, P: ProjectionPair, x0,
                tols: PdpTolerances | None = None, max_outer=100, window=1, terminate=True):
    """Primal-dual projection iteration from a feasible ``x0``.

    Each step solves the surrogate subproblem on V~ with the dual-projected
    linear term, projects the result back onto V and takes the exact line
    search step. With ``terminate=False`` only exact convergence stops it.
    """
    tols = tols or PdpTolerances()
    x = as_vec(x0).copy()
    report = PdpReport("pdp_general")
    report.iterates.append(x.copy())
    pg0 = None
    for k in range(max_outer):
        g = q.grad(x)
        Pg = P.apply_adjoint(g)
        pg_norm = float(np.linalg.norm(Pg))
        pg0 = pg_norm if pg0 is None else pg0
        lam = Pg - g
        dy = surrogate.subspace_solver(g + lam)
        dx = P.apply(dy)
        if pg_norm == 0.0:
            report.converged, report.terminated_by = True, "exact"
            break
        if not np.any(dx):
            if pg_norm > 1e-8 * pg0:
                raise StagnationError("projected surrogate step vanished with nonzero projected gradient")
            report.converged, report.terminated_by = True, "exact"
            break
        omega = line_search(q, x, dx)
        step = omega * dx
        inc = energy_norm(q.b_apply, step)
        lb = math.sqrt(sum(v * v for v in report.increments) + inc * inc)
        if report.increments and inc <= ZERO_INCREMENT * EPS * lb:
            report.converged, report.terminated_by = True, "exact"
            break
        x = x + step
        report.iterations = k + 1
        report.iterates.append(x.copy())
        report.omegas.append(omega)
        fired = _record_step(report, inc, tols.lambda_pdp, window)
        est = report.estimates[-1] if len(report.increments) > 1 else None
        report.log.append(_log_line(k + 1, inc, est, omega, 0, report.counters))
        if terminate and fired:
            report.converged, report.terminated_by = True, "estimate"
            break
    else:
        report.terminated_by = "max_outer"
    return x, report


# ---------------------------------------------------------------------------------
# quotient-space steepest descent (dense)


def quotient_extension(b_tilde, V, Vt, W) -> np.ndarray:
    """Columns ``E[:, j]``: the element of ``[V e_j] cap V~`` with least b~-energy.

    Raises :class:`SubspaceConditionError` when some class misses V~.
    """
    b_tilde = np.asarray(b_tilde, dtype=float)
    N = sla.null_space(Vt.T)  # V~ = ker N^T
    if N.shape[1] == 0:
        return V.copy()
    nw, m = W.shape[1], N.shape[1]
    K = np.block([[W.T @ b_tilde @ W, W.T @ N], [N.T @ W, np.zeros((m, m))]])
    rhs = np.vstack([-W.T @ b_tilde @ V, -N.T @ V])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    E = V + W @ sol[:nw]
    viol = np.linalg.norm(N.T @ E, axis=0)
    if np.any(viol > 1e-9 * max(1.0, float(np.linalg.norm(V)))):
        raise SubspaceConditionError("a class [v] does not meet the surrogate subspace")
    return E


def quotient_condition(b, b_tilde, V, Vt, W) -> float:
    """Condition number of ``b`` on V relative to the quotient scalar product."""
    E = quotient_extension(b_tilde, V, Vt, W)
    G = E.T @ np.asarray(b_tilde) @ E
    ev = sla.eigh(V.T @ np.asarray(b) @ V, 0.5 * (G + G.T), eigvals_only=True)
    return float(ev[-1] / ev[0])


def quotient_steepest_descent(b, lin, b_tilde, V, Vt, W, xi0, max_iter=50):
    """Steepest descent for ``f([xi]) = q(P xi)`` on ``X/W``.

    Classes are represented through V coordinates; the scalar product of
    ``[v]`` is the least b~-energy over ``[v] cap V~``. Returns the list of
    representatives ``P xi_k`` (starting with ``P xi0``).
    """
    b = np.asarray(b, dtype=float)
    b_tilde = np.asarray(b_tilde, dtype=float)
    lin = as_vec(lin)
    K = sla.null_space(W.T)
    Pmat = V @ np.linalg.solve(K.T @ V, K.T)
    E = quotient_extension(b_tilde, V, Vt, W)
    G = E.T @ b_tilde @ E
    G_cho = sla.cho_factor(0.5 * (G + G.T))
    xi = as_vec(xi0).copy()
    reps = [Pmat @ xi]
    for _ in range(max_iter):
        x = reps[-1]
        grad = V.T @ (b @ x + lin)  # derivative of f along the V coordinates
        if not np.any(grad):
            break
        c = -sla.cho_solve(G_cho, grad)
        v = V @ c
        curv = v @ b @ v
        if curv <= 0:
            raise NonConvexityError("b(Pv, Pv) <= 0")
        if curv <= (ZERO_INCREMENT * EPS) ** 2 * max(x @ b @ x, 1e-300):
            break
        omega = -(grad @ c) / curv
        xi = xi + omega * (E @ c)  # any representative of the class works
        reps.append(Pmat @ xi)
    return reps


# ---------------------------------------------------------------------------------
# dense instances


def dense_toy_instance(toy: DenseToy):
    """``(q, surrogate, projection)`` for a :class:`DenseToy`."""
    q = QuadraticObjective.from_matrix(toy.b_mat, toy.q_lin, toy.x0)
    Pm = toy.projection()
    P = ProjectionPair(lambda v: Pm @ v, lambda v: Pm.T @ v)
    Vt = toy.Vtilde_basis
    Gt = Vt.T @ toy.b_tilde_mat @ Vt
    cho = sla.cho_factor(0.5 * (Gt + Gt.T))
    bt = toy.b_tilde_mat
    S = SurrogateSpec(lambda v: bt @ v, lambda f: -Vt @ sla.cho_solve(cho, Vt.T @ f))
    return q, S, P


def codim1_instance(prob: Codim1Problem, x_star):
    """``q = 1/2 |x - x*|^2`` with the orthogonal projection onto V and the
    exact solve on V~ = n~^perp."""
    x_star = as_vec(x_star)
    n, nt = prob.n, prob.n_tilde
    q = QuadraticObjective(lambda v: as_vec(v).copy(), -x_star)
    Pn = lambda v: v - n * (n @ v)  # noqa: E731
    P = ProjectionPair(Pn, Pn)
    S = SurrogateSpec(lambda v: as_vec(v).copy(), lambda f: -(f - nt * (nt @ f)))
    return q, S, P


def codim1_worst_start(prob: Codim1Problem) -> np.ndarray:
    """A solution for which every step contracts by exactly ``(k-1)/(k+1)``
    from ``x0 = 0`` (needs ``dim >= 3``)."""
    if prob.dim < 3:
        raise ConfigurationError("worst-case start needs dim >= 3")
    x = np.zeros(prob.dim)
    x[1] = 1.0 / math.cos(prob.theta)
    x[2] = 1.0
    return x


# ---------------------------------------------------------------------------------
# PDP for optimal control


@dataclass
class PdpState:
    k: int
    x: BlockVecX
    p: np.ndarray
    r_x: BlockVecX
    r_p: np.ndarray
    increments: list


def _role_q(Q, counter, role):
    def apply(v):
        counter[f"q_a_{role}"] += 1
        return Q(v)

    return apply


def _direct_solvers(A):
    lu = spla.splu(A.to_scipy().tocsc())
    return (lambda v: lu.solve(as_vec(v))), (lambda v: lu.solve(as_vec(v), trans="T"))


def pdp_oc(P: KktProblem, tols: PdpTolerances | None = None, max_outer=50, surrogate="chebyshev",
           a_solver="pcg", base_precond=None, m_u_tilde=None, window=1, harvest_tol=1e-13,
           harvest_max=40, seed=0, callback=None, log: io.TextIOBase | None = None):
    """PDP for the optimal-control KKT system from ``x0 = 0, p0 = 0``.

    surrogate: "chebyshev" (``A~^-1`` a fixed Chebyshev polynomial in
    ``Q_A^-1 A``), "robust" (the same for ``A + nu^-1/2 B E``) or "exact"
    (``A~ = A`` by sparse LU). a_solver: "pcg" (projection solves with ``A``
    by pcg preconditioned with ``Q_A``) or "direct".

    The first adjoint solve also harvests cg coefficients for the spectral
    interval of ``Q_A^-1 A``. Returns ``(x, p, report)``; ``report.counters``
    splits ``Q_A`` applications by role (inner, primal, dual, spectrum).
    """
    tols = tols or PdpTolerances()
    if surrogate not in ("chebyshev", "robust", "exact"):
        raise ConfigurationError(f"unknown surrogate {surrogate!r}")
    if a_solver not in ("pcg", "direct"):
        raise ConfigurationError(f"unknown a_solver {a_solver!r}")
    report = PdpReport("pdp")
    counter = report.counters
    for r in ROLES:
        counter[f"q_a_{r}"] += 0
    counter["a_inv_applies"] += 0
    counter["mu_solves"] += 0

    x = BlockVecX.zeros(P.n_state, P.n_control)
    p = np.zeros(P.n_state)
    r_x = BlockVecX(-P.s_y, -P.s_u)
    r_p = np.zeros(P.n_state)
    if not (np.any(r_x.y) or np.any(r_x.u)):
        report.converged, report.terminated_by = True, "zero_data"
        return x, p, report

    needs_mg = a_solver == "pcg" or surrogate in ("chebyshev", "robust")
    if needs_mg and base_precond is None:
        if P.grid_meta is None:
            raise ConfigurationError("no multigrid hierarchy for a problem without grid metadata")
        base_precond = build_mg_hierarchy(P.grid_meta.n_cells)
    QA = as_operator(base_precond) if base_precond is not None else None
    if a_solver == "direct" or surrogate == "exact":
        a_direct, a_direct_T = _direct_solvers(P.A)

    if m_u_tilde is None:
        m_u_tilde = mass_precond(P.M_u)
    m_u_tilde = counted(m_u_tilde, counter, "mu_solves")

    def solve_A(rhs, role, tol, adjoint=False):
        if a_solver == "direct":
            return (a_direct_T if adjoint else a_direct)(rhs), 0
        op = P.A.rmatvec if adjoint else P.A.matvec
        sol, tr = pcg(op, _role_q(QA, counter, role), rhs, tol)
        return sol, tr.iterations

    a_inv = a_inv_T = None

    def build_surrogate(trace):
        nonlocal a_inv, a_inv_T
        if surrogate == "exact":
            a_inv, a_inv_T = a_direct, a_direct_T
            return
        if surrogate == "chebyshev":
            Aop, Qop, tr = P.A.matvec, QA, trace
        else:
            At = robust_surrogate(P.A, P.B, P.E, P.nu)
            Aop = At.matvec
            BE = (P.B @ P.E).diagonal()
            if P.grid_meta and (P.B @ P.E).is_diagonal() and np.all(BE == BE[0]):
                # A~ is a shifted Laplacian on the Poisson grids
                Qop = build_mg_hierarchy(P.grid_meta.n_cells, shift=BE[0] * P.nu ** -0.5)
            else:
                Qop = QA
            rng = np.random.default_rng(seed)
            _, tr = pcg(Aop, _role_q(Qop, counter, "spectrum"), rng.standard_normal(P.n_state),
                        harvest_tol, harvest_max)
        interval = estimate_spectrum(tr.alphas, tr.betas)
        degree = chebyshev_degree(interval, tols.lambda_atil)
        cheb = ChebyshevOperator(Aop, _role_q(Qop, counter, "inner"), interval, degree)
        report.info.update(chebyshev_degree=degree, sigma_min=interval.sigma_min,
                           sigma_max=interval.sigma_max, harvest_steps=tr.iterations)
        # the Chebyshev map is symmetric for symmetric A~ and Q_A
        a_inv, a_inv_T = cheb, cheb

    scale_x = 0.0
    for k in range(max_outer):
        # dual projection: A^T dp = -r_y
        if k == 0 and a_solver == "pcg" and surrogate != "exact":
            rhs = -r_x.y
            if np.any(rhs):
                dp, trace = pcg(P.A.rmatvec, _role_q(QA, counter, "spectrum"), rhs,
                                min(harvest_tol, tols.lambda_pstar), harvest_max)
                harvest = trace
            else:
                rng = np.random.default_rng(seed)
                _, harvest = pcg(P.A.matvec, _role_q(QA, counter, "spectrum"),
                                 rng.standard_normal(P.n_state), harvest_tol, harvest_max)
                dp = np.zeros(P.n_state)
            build_surrogate(harvest)
        else:
            if k == 0:
                if surrogate != "exact" and a_solver == "direct":
                    rng = np.random.default_rng(seed)
                    _, harvest = pcg(P.A.matvec, _role_q(QA, counter, "spectrum"),
                                     rng.standard_normal(P.n_state), harvest_tol, harvest_max)
                    build_surrogate(harvest)
                else:
                    build_surrogate(None)
            dp, _ = solve_A(-r_x.y, "dual", tols.lambda_pstar, adjoint=True)
        p = p + dp
        r_x = r_x + P.C_adjoint(dp)

        # surrogate step on V~
        Qt = ConstraintPrecond(counted(a_inv, counter, "a_inv_applies"),
                               counted(a_inv_T, counter, "a_inv_applies"), m_u_tilde, P.B)
        s = BlockVecZ(-r_x.y, -r_x.u, np.zeros(P.n_state))
        zH, inner = modified_ppcg(P, Qt, s, rel_tol=tols.lambda_ppcg)
        dxH = zH.x

        # primal projection: A dy = -(r_p + C dx_H)
        dyA, _ = solve_A(-(r_p + P.C_apply(dxH)), "primal", tols.lambda_p)
        dx = BlockVecX(dxH.y + dyA, dxH.u)

        Mdx = P.M_apply(dx)
        curv = Mdx.dot(dx)
        if not curv > 0:
            if not (np.any(dx.y) or np.any(dx.u)):
                report.converged, report.terminated_by = True, "exact"
                break
            raise NonConvexityError(f"<M dx, dx> = {curv:.3e} <= 0")
        omega = -r_x.dot(dx) / curv
        inc = abs(omega) * math.sqrt(curv)
        lb = math.sqrt(sum(v * v for v in report.increments) + inc * inc)
        if report.increments and inc <= ZERO_INCREMENT * EPS * lb:
            report.converged, report.terminated_by = True, "exact"
            break
        x = x + omega * dx
        r_x = r_x + omega * Mdx
        r_p = r_p + omega * P.C_apply(dx)
        report.iterations = k + 1
        report.omegas.append(omega)
        report.inner_iterations.append(inner.iterations)
        scale_x = max(x.norm(), 1e-300)
        report.feasibility.append(float(np.linalg.norm(P.C_apply(x))) / scale_x)

        fired = _record_step(report, inc, tols.lambda_pdp, window)
        est = report.estimates[-1] if len(report.increments) > 1 else None
        line = _log_line(k + 1, inc, est, omega, inner.iterations, counter)
        report.log.append(line)
        if log is not None:
            log.write(line + "\n")
        if callback:
            callback(PdpState(k + 1, x, p, r_x, r_p, list(report.increments)))
        if fired:
            report.converged, report.terminated_by = True, "estimate"
            break
    else:
        report.terminated_by = "max_outer"

    # bring the multiplier up to date with the final iterate
    dp, _ = solve_A(-r_x.y, "dual", tols.lambda_pstar, adjoint=True)
    p = p + dp
    return x, p, report


def dense_pdp_oc_condition(P: KktProblem, a_inv_dense) -> tuple[float, float]:
    """Dense diagnostics for PDP-OC with a fixed surrogate ``A~^-1``.

    Returns ``(kappa, eps)``: the quotient-space condition number of the
    iteration and ``eps = |S~ - S|`` in the (U -> G) norms induced by
    ``M_u / nu`` and ``M_y``.
    """
    A, B = P.A.to_dense(), P.B.to_dense()
    My, Mu = P.M_y.to_dense(), P.M_u.to_dense()
    S = np.linalg.solve(A, B)
    St = np.asarray(a_inv_dense) @ B
    ny, nc = S.shape
    Ly = np.linalg.cholesky(My)
    Lu = np.linalg.cholesky(Mu / P.nu)
    eps = float(np.linalg.norm(Ly.T @ (St - S) @ np.linalg.inv(Lu.T), 2))
    b = sla.block_diag(My, Mu)
    V = np.vstack([S, np.eye(nc)])
    Vt = np.vstack([St, np.eye(nc)])
    W = np.vstack([np.eye(ny), np.zeros((nc, ny))])
    return quotient_condition(b, b, V, Vt, W), eps


def assemble_operator(op, n) -> np.ndarray:
    """Dense matrix of a linear map by application to unit vectors."""
    return np.column_stack([as_vec(op(e)) for e in np.eye(n)])


def chebyshev_surrogate(A, base_precond, accuracy, counter: Counter | None = None, seed=0, harvest_tol=1e-13,
                        harvest_max=40) -> ChebyshevOperator:
    """Chebyshev ``A~^-1`` for ``A`` with base preconditioner ``Q_A``.

    The spectral interval comes from the cg coefficients of a pcg solve with a
    seeded random right-hand side (counted under ``q_a_spectrum``); the degree
    is the smallest reaching ``accuracy``. Later applications count under
    ``q_a_inner``.
    """
    Aop, Q = as_operator(A), as_operator(base_precond)
    c = counter if counter is not None else Counter()
    n = A.shape[0] if hasattr(A, "shape") else None
    if n is None:
        raise ConfigurationError("need a matrix to size the harvest right-hand side")
    rng = np.random.default_rng(seed)
    _, tr = pcg(Aop, _role_q(Q, c, "spectrum"), rng.standard_normal(n), harvest_tol, harvest_max)
    interval = estimate_spectrum(tr.alphas, tr.betas)
    return ChebyshevOperator(Aop, _role_q(Q, c, "inner"), interval, chebyshev_degree(interval, accuracy))
