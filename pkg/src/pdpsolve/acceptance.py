"""Acceptance checks: oracle equivalences, rate bounds and qualitative trends.

Each ``criterion_N`` returns a :class:`CriterionResult`; ``run_all`` runs them
in order. Tolerances are fixed here and never adapted to results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .bench import ExperimentConfig, run_point
from .core import SparseMat
from .krylov import modified_ppcg, pcg, ppcg
from .pdp import (
    PdpTolerances,
    assemble_operator,
    chebyshev_surrogate,
    codim1_instance,
    codim1_worst_start,
    condition_bounds,
    dense_pdp_oc_condition,
    dense_toy_instance,
    pdp_general,
    pdp_oc,
    quotient_condition,
    quotient_steepest_descent,
)
from .precond import (
    ChebyshevOperator,
    ConstraintPrecond,
    SpectralInterval,
    build_mg_hierarchy,
    chebyshev_bound,
    chebyshev_degree,
    mass_precond,
    ritz_values,
)
from .problems import build_codim1, build_dense_toy, build_poisson_control, direct_solve_oracle

N_TOYS = 20
EQUIV_STEPS = 50
EQUIV_TOL = 1e-10
RATE_SLACK = 1e-8
# contractions are only measured while the error is above roundoff
RATE_FLOOR = 1e-9
ESTIMATOR_FACTOR = 10.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(number, name):
    def deco(fn):
        def run(*a, **kw):
            t0 = time.perf_counter()
            res = fn(*a, **kw)
            passed, detail = res[:2]
            data = res[2] if len(res) > 2 else {}
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0, data)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return deco


def toy_suite(n=N_TOYS):
    """Reproducible dense toys of dimension <= 20 alternating both kinds."""
    toys = []
    for seed in range(n):
        rng = np.random.default_rng(1000 + seed)
        dim = int(rng.integers(4, 21))
        dim_V = int(rng.integers(1, dim))
        kind = "graph" if seed % 2 == 0 else "superset"
        toys.append(build_dense_toy(dim, dim_V, seed=seed, kind=kind, spd_spread=10.0))
    return toys


def _b_norm(B, e):
    return math.sqrt(max(float(e @ B @ e), 0.0))


def _contractions(iterates, x_star, B):
    errs = [_b_norm(B, x - x_star) for x in iterates]
    return [errs[i + 1] / errs[i] for i in range(len(errs) - 1) if errs[i] > RATE_FLOOR * errs[0]]


def _run_toy(toy):
    q, S, P = dense_toy_instance(toy)
    _, rep = pdp_general(q, S, P, toy.x0, max_outer=EQUIV_STEPS, terminate=False)
    return rep


@_timed(1, "PDP / quotient steepest descent equivalence")
def criterion_1():
    worst = 0.0
    for toy in toy_suite():
        rep = _run_toy(toy)
        reps = quotient_steepest_descent(toy.b_mat, toy.q_lin, toy.b_tilde_mat, toy.V_basis,
                                         toy.Vtilde_basis, toy.W_basis, toy.x0, EQUIV_STEPS)
        scale = max(1.0, float(np.linalg.norm(toy.solution())))
        n = min(len(reps), len(rep.iterates))
        # both must have run the full window or stopped at convergence
        x_star = toy.solution()
        for seq in (reps, rep.iterates):
            if len(seq) < EQUIV_STEPS + 1 and np.linalg.norm(seq[-1] - x_star) > 1e-8 * scale:
                return False, "a sequence stopped early without converging"
        d = max(np.linalg.norm(reps[i] - rep.iterates[i]) for i in range(n)) / scale
        worst = max(worst, d)
    return worst <= EQUIV_TOL, f"max relative iterate difference {worst:.2e} <= {EQUIV_TOL:g}"


@_timed(2, "contraction rate bound")
def criterion_2():
    worst = -math.inf
    for toy in toy_suite():
        rep = _run_toy(toy)
        kappa = quotient_condition(toy.b_mat, toy.b_tilde_mat, toy.V_basis, toy.Vtilde_basis, toy.W_basis)
        bound = (kappa - 1.0) / (kappa + 1.0)
        rates = _contractions(rep.iterates, toy.solution(), toy.b_mat)
        if rates:
            worst = max(worst, max(rates) - bound)
    return worst <= RATE_SLACK, f"max(measured - (k-1)/(k+1)) = {worst:.2e} <= {RATE_SLACK:g}"


@_timed(3, "codimension-1 example rates")
def criterion_3():
    details, ok = [], True
    for theta in (0.0, math.pi / 6, math.pi / 4, math.pi / 3):
        prob = build_codim1(theta, dim=3)
        xs = codim1_worst_start(prob)
        q, S, P = codim1_instance(prob, xs)
        _, rep = pdp_general(q, S, P, np.zeros(3), max_outer=60, terminate=False)
        pred = prob.predicted_rate
        if theta == 0.0:
            good = rep.iterations == 1
            details.append(f"theta=0: {rep.iterations} step")
        else:
            rates = _contractions(rep.iterates, xs, np.eye(3))
            meas = rates[-1]
            good = abs(meas - pred) <= 0.05 * pred
            details.append(f"theta={theta:.4f}: {meas:.6f} vs {pred:.6f}")
        ok &= good
    return ok, "; ".join(details)


@_timed(4, "ppcg feasibility and accuracy")
def criterion_4():
    P = build_poisson_control(8, 1e-2)
    lu = spla.splu(P.A.to_scipy().tocsc())
    Q = ConstraintPrecond(lambda v: lu.solve(v), lambda v: lu.solve(v, trans="T"), mass_precond(P.M_u), P.B)
    feas = []

    def cb(k, z):
        nx = z.x.norm()
        if nx > 0:
            feas.append(np.linalg.norm(P.C_apply(z.x)) / nx)

    z, rep = ppcg(P, Q, rel_tol=1e-12, callback=cb)
    xs, ps = direct_solve_oracle(P)
    ref = np.concatenate([xs.flat(), ps])
    err = np.linalg.norm(z.flat() - ref) / np.linalg.norm(ref)
    ok = max(feas) <= 1e-10 and err <= 1e-8
    return ok, f"{rep.iterations} its, max |Cx_k|/|x_k| = {max(feas):.1e}, rel. error {err:.1e}"


@_timed(5, "modified ppcg w-recursion")
def criterion_5():
    worst, its = 0.0, []
    for nu in (1e-2, 1e-4):
        for lam in (1e-1, 1e-2):
            P = build_poisson_control(8, nu)
            cheb = chebyshev_surrogate(P.A, build_mg_hierarchy(8), lam)
            At = np.linalg.inv(assemble_operator(cheb, P.n_state))
            Q = ConstraintPrecond(cheb, cheb, mass_precond(P.M_u), P.B)
            errs = []

            def cb(k, d, w):
                ref = At.T @ d.p
                errs.append(np.linalg.norm(w - ref) / max(np.linalg.norm(ref), 1e-300))

            _, rep = modified_ppcg(P, Q, rel_tol=1e-12, callback=cb)
            its.append(rep.iterations)
            worst = max(worst, max(errs))
    return worst <= 1e-10, f"max |w_k - A~^T d_k,p| / |A~^T d_k,p| = {worst:.1e} over {sum(its)} directions"


@_timed(6, "Chebyshev error bound and degree")
def criterion_6():
    n = 15
    T = SparseMat.from_dense(2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))
    Ad = T.to_dense()
    d = np.diag(Ad)
    ev = sla.eigh(Ad, np.diag(d), eigvals_only=True)
    interval = SpectralInterval(float(ev[0]), float(ev[-1]))
    rng = np.random.default_rng(6)
    b = rng.standard_normal(n)
    xs = np.linalg.solve(Ad, b)
    nA = _b_norm(Ad, xs)
    worst = -math.inf
    for k in range(51):
        C = ChebyshevOperator(T.matvec, lambda v: v / d, interval, k)
        worst = max(worst, _b_norm(Ad, C(b) - xs) / nA - chebyshev_bound(interval.kappa, k))
    deg = chebyshev_degree(SpectralInterval(1.0, 8.5), 1e-2)
    ok = worst <= 1e-12 and deg == 8
    return ok, f"max(error - bound) = {worst:.1e}, degree(8.5, 1e-2) = {deg}"


@_timed(7, "Lanczos spectral estimate")
def criterion_7():
    n_cells = 8
    A = build_poisson_control(n_cells, 1.0).A
    H = build_mg_hierarchy(n_cells)
    N = A.shape[0]
    Q = assemble_operator(H, N)
    ev = np.sort(np.linalg.eigvals(Q @ A.to_dense()).real)
    b = np.random.default_rng(7).standard_normal(N)
    _, tr = pcg(A, H, b, rel_tol=1e-13, max_iter=40)
    ritz = ritz_values(tr.alphas, tr.betas)
    e_lo = abs(ritz[0] - ev[0]) / ev[0]
    e_hi = abs(ritz[-1] - ev[-1]) / ev[-1]
    ok = tr.iterations <= 40 and max(e_lo, e_hi) <= 0.05
    return ok, f"{tr.iterations} steps, rel. deviation min {e_lo:.1e}, max {e_hi:.1e}"


@_timed(8, "condition bound with surrogate error")
def criterion_8():
    worst, rows = -math.inf, []
    for nu in (1e-1, 1e-2, 1e-3):
        P = build_poisson_control(8, nu)
        for lam in (0.5, 1e-1, 1e-2):
            cheb = chebyshev_surrogate(P.A, build_mg_hierarchy(8), lam)
            kappa, eps = dense_pdp_oc_condition(P, assemble_operator(cheb, P.n_state))
            bound = condition_bounds(1.0, 1.0, eps, nu)["kappa_pdp_eps"]
            worst = max(worst, kappa / (bound * (1 + 1e-6)))
            rows.append((nu, lam, kappa, bound))
    excess = max((k - 1.0) / (b - 1.0) for _, _, k, b in rows if b > 1.0)
    return worst <= 1.0, (f"max kappa / bound = {worst:.6f}, max (kappa-1)/(bound-1) = {excess:.3f} "
                          f"over {len(rows)} instances"), {"rows": rows}


def _pdp_instance(n_cells, nu, lam=1e-2, lambda_pdp=1e-8):
    """PDP-OC run plus a tight reference from ppcg with exact A solves."""
    P = build_poisson_control(n_cells, nu)
    x, p, rep = pdp_oc(P, PdpTolerances.common(lam, lambda_pdp))
    lu = spla.splu(P.A.to_scipy().tocsc())
    Q = ConstraintPrecond(lambda v: lu.solve(v), lambda v: lu.solve(v, trans="T"), mass_precond(P.M_u), P.B)
    zref, _ = ppcg(P, Q, rel_tol=1e-13)
    xs = zref.x
    nstar = math.sqrt(P.M_apply(xs).dot(xs))
    d = x - xs
    err = math.sqrt(P.M_apply(d).dot(d)) / nstar
    return rep, err


@_timed(9, "end-to-end PDP for optimal control")
def criterion_9():
    rep, err = _pdp_instance(16, 1e-3)
    ok = rep.converged and rep.terminated_by == "estimate" and rep.iterations <= 15 and err <= 1e-6
    return ok, (f"{rep.iterations} outer its, terminated by {rep.terminated_by}, "
                f"relative M-error {err:.1e}"), {"err": err, "report": rep}


SWEEP_NUS = (1e-1, 1e-2, 1e-3, 1e-4)


@_timed(10, "nu-sweep trends")
def criterion_10():
    cfg = ExperimentConfig(methods=("pdp", "minres_q2"), nus=SWEEP_NUS, lambdas=(1e-2,), n_cells=(16,))
    pdp_rows = [run_point(cfg, i, "pdp", 16, nu, 1e-2)[0] for i, nu in enumerate(SWEEP_NUS)]
    outer = [r["outer_iters"] for r in pdp_rows]
    total = [r["q_a_total"] for r in pdp_rows]
    mono = all(a <= b for a, b in zip(outer, outer[1:])) and all(a <= b for a, b in zip(total, total[1:]))
    mres_ok = True
    mres = []
    for i, nu in enumerate(SWEEP_NUS):
        row, rep = run_point(cfg, 10 + i, "minres_q2", 16, nu, 1e-2)
        h = rep.residual_history if rep else []
        mono_h = bool(h) and all(b <= a for a, b in zip(h, h[1:]))
        mres_ok &= bool(row["converged"]) and not row["failed"] and mono_h
        mres.append(row["outer_iters"])
    ok = mono and mres_ok and all(r["converged"] for r in pdp_rows)
    cells = ", ".join(f"{o}({t})" for o, t in zip(outer, total))
    return ok, f"PDP outer(total Q_A) over nu {SWEEP_NUS}: {cells}; MINRES-Q2 its {mres}"


@_timed(11, "estimator sanity")
def criterion_11():
    worst, n = 0.0, 0
    for n_cells in (8, 16):
        for nu in SWEEP_NUS:
            rep, err = _pdp_instance(n_cells, nu)
            if rep.terminated_by == "estimate":
                n += 1
                worst = max(worst, err / (ESTIMATOR_FACTOR * 1e-8))
    ok = n > 0 and worst <= 1.0
    return ok, f"{n} terminations, max true error / (10 Lambda_PDP |x*-x0|) = {worst:.3f}"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11)


def run_all(stream=None) -> list:
    results = []
    for c in CRITERIA:
        try:
            r = c()
        except Exception as exc:  # a crash is a failed criterion, not an abort
            r = CriterionResult(CRITERIA.index(c) + 1, c.__name__, False, f"{type(exc).__name__}: {exc}")
        results.append(r)
        if stream is not None:
            print(r.line(), file=stream, flush=True)
    return results
