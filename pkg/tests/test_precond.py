import math
from collections import Counter

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpsolve.core import BlockVecZ, SparseMat
from pdpsolve.errors import BreakdownError, IndefinitePreconditionerError
from pdpsolve.krylov import pcg
from pdpsolve.precond import (
    ChebyshevOperator,
    ConstraintPrecond,
    SpectralInterval,
    build_mg_hierarchy,
    chebyshev_apply,
    chebyshev_bound,
    chebyshev_degree,
    constraint_precond_apply,
    estimate_spectrum,
    jacobi_apply,
    mass_precond,
    mg_vcycle,
    ritz_values,
)
from pdpsolve.problems import poisson_matrix

from conftest import rel


def lap1d(n):
    return SparseMat.from_scipy(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))


def mg_dense(H, n):
    return np.column_stack([mg_vcycle(H, e) for e in np.eye(n)])


def mg_ritz(n_cells, seed=0):
    """Ritz values of Q_MG^-1 A from a long pcg run."""
    A = poisson_matrix(n_cells)
    H = build_mg_hierarchy(n_cells)
    b = np.random.default_rng(seed).standard_normal(A.shape[0])
    _, tr = pcg(A, H, b, rel_tol=1e-14, max_iter=60)
    return ritz_values(tr.alphas, tr.betas)


# Jacobi ---------------------------------------------------------------------------

def test_jacobi_hand():
    A = SparseMat.diag([2.0, 4.0])
    np.testing.assert_array_equal(jacobi_apply(A, [2.0, 4.0], 1.0), [1, 1])
    np.testing.assert_array_equal(jacobi_apply(A, [2.0, 4.0], 0.0), [0, 0])


def test_jacobi_zero_diagonal():
    with pytest.raises(ValueError):
        jacobi_apply(SparseMat.from_dense([[0.0, 1.0], [1.0, 2.0]]), [1.0, 1.0])


def test_jacobi_monotone_1d():
    A = lap1d(7)
    b = np.random.default_rng(0).standard_normal(7)
    x = np.zeros(7)
    hist = [np.linalg.norm(b)]
    for _ in range(50):
        x = x + jacobi_apply(A, b - A.matvec(x), 0.8)
        hist.append(np.linalg.norm(b - A.matvec(x)))
    assert all(b_ < a for a, b_ in zip(hist, hist[1:]))


# multigrid ----------------------------------------------------------------------------

def test_mg_single_level(backend, rng):
    H = build_mg_hierarchy(4)
    assert H.depth == 1
    A = poisson_matrix(4).to_dense()
    r = rng.standard_normal(9)
    assert rel(mg_vcycle(H, r), np.linalg.solve(A, r)) <= 1e-12


def test_mg_zero(backend):
    H = build_mg_hierarchy(16)
    assert np.all(mg_vcycle(H, np.zeros(225)) == 0)


def test_mg_prolongation_is_scaled_transpose():
    H = build_mg_hierarchy(16)
    for lv in H.levels[:-1]:
        np.testing.assert_array_equal(lv.prolongation.to_dense(), 4 * lv.restriction.to_dense().T)
    assert H.levels[-1].A.shape[0] <= 25


def test_mg_symmetric_positive(backend):
    rng = np.random.default_rng(7)
    H = build_mg_hierarchy(16)
    for _ in range(10):
        v, w = rng.standard_normal(225), rng.standard_normal(225)
        a, b = v @ mg_vcycle(H, w), w @ mg_vcycle(H, v)
        assert abs(a - b) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(w) * 1e-2
        assert v @ mg_vcycle(H, v) > 0


def test_mg_ritz_vs_dense_n8(backend):
    A = poisson_matrix(8).to_dense()
    M = mg_dense(build_mg_hierarchy(8), 49)
    ev = np.sort(np.linalg.eigvals(M @ A).real)
    rz = mg_ritz(8)
    assert abs(rz[0] - ev[0]) <= 1e-3 * ev[0] and abs(rz[-1] - ev[-1]) <= 1e-3 * ev[-1]


def test_mg_condition_n16():
    rz = mg_ritz(16)
    kappa = rz[-1] / rz[0]
    print(f"kappa(Q_MG^-1 A) at n_cells=16: {kappa:.4f}")
    assert kappa <= 1.35


def test_mg_v22_condition_n16():
    A = poisson_matrix(16)
    H = build_mg_hierarchy(16, pre_steps=2, post_steps=2)
    b = np.random.default_rng(0).standard_normal(225)
    _, tr = pcg(A, H, b, rel_tol=1e-14, max_iter=60)
    rz = ritz_values(tr.alphas, tr.betas)
    assert rz[-1] / rz[0] <= 1.35


def test_mg_backends_agree(rng):
    from pdpsolve._backend import BACKEND, get_kernels
    import pdpsolve.precond as pc

    if BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    H = build_mg_hierarchy(32)
    r = rng.standard_normal(31 * 31)
    out = {}
    for name in ("python", "cython"):
        old = pc.kernels
        pc.kernels = get_kernels(name)
        try:
            out[name] = mg_vcycle(H, r)
        finally:
            pc.kernels = old
    np.testing.assert_array_equal(out["python"], out["cython"])


# spectral estimation ------------------------------------------------------------------

def test_spectrum_diag123():
    _, tr = pcg(np.diag([1.0, 2, 3]), lambda v: v, np.ones(3), rel_tol=1e-15, max_iter=3)
    rz = ritz_values(tr.alphas, tr.betas)
    assert abs(rz[0] - 1) <= 1e-10 and abs(rz[-1] - 3) <= 1e-10
    iv = estimate_spectrum(tr.alphas, tr.betas)
    assert math.isclose(iv.sigma_min, rz[0] / 1.05) and math.isclose(iv.sigma_max, rz[-1] * 1.05)


def test_spectrum_scaled_identity():
    c = 3.5
    _, tr = pcg(lambda v: c * v, lambda v: v, np.ones(4), rel_tol=1e-12)
    assert len(tr.alphas) == 1
    iv = estimate_spectrum(tr.alphas, tr.betas)
    assert math.isclose(iv.sigma_min, c / 1.05, rel_tol=1e-14)
    assert math.isclose(iv.sigma_max, c * 1.05, rel_tol=1e-14)


def test_spectrum_mg_n16_vs_dense_n8():
    A = poisson_matrix(8).to_dense()
    ev = np.sort(np.linalg.eigvals(mg_dense(build_mg_hierarchy(8), 49) @ A).real)
    rz = mg_ritz(16)
    # Ritz extremes before the safety widening
    assert abs(rz[0] - ev[0]) <= 0.05 * ev[0]
    assert abs(rz[-1] - ev[-1]) <= 0.05 * ev[-1]


def test_spectrum_breakdown():
    with pytest.raises(BreakdownError):
        estimate_spectrum([1.0, -0.5], [0.1])
    with pytest.raises(BreakdownError):
        estimate_spectrum([], [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=12), st.data())
def test_interval_contains_ritz(alphas, data):
    betas = data.draw(st.lists(st.floats(0, 10), min_size=len(alphas) - 1, max_size=len(alphas) - 1))
    rz = ritz_values(alphas, betas)
    if rz[0] <= 0:
        return
    iv = estimate_spectrum(alphas, betas)
    assert iv.sigma_min <= rz[0] and rz[-1] <= iv.sigma_max


def test_interval_validation():
    with pytest.raises(ValueError):
        SpectralInterval(2.0, 1.0)
    with pytest.raises(ValueError):
        SpectralInterval(0.0, 1.0)


# Chebyshev ------------------------------------------------------------------------------

def test_degree_examples():
    assert chebyshev_degree(SpectralInterval(1.0, 5.0), 1.0) == 0
    assert chebyshev_degree(SpectralInterval(2.0, 2.0), 1e-6) == 1
    assert chebyshev_degree(SpectralInterval(1.0, 8.5), 1e-2) == 8


def test_degree_minimal():
    for kappa in (1.5, 4.0, 8.5, 100.0):
        for acc in (0.5, 1e-2, 1e-6):
            k = chebyshev_degree(SpectralInterval(1.0, kappa), acc)
            assert chebyshev_bound(kappa, k) <= acc
            assert k == 0 or chebyshev_bound(kappa, k - 1) > acc


def test_degree_bad_accuracy():
    with pytest.raises(ValueError):
        chebyshev_degree(SpectralInterval(1.0, 2.0), 0.0)


def test_cheb_degree0(rng):
    A = lap1d(9)
    d = A.diagonal()
    iv = SpectralInterval(0.5, 1.5)
    r = rng.standard_normal(9)
    out = chebyshev_apply(ChebyshevOperator(A.matvec, lambda v: v / d, iv, 0), r)
    np.testing.assert_allclose(out, (2.0 / 2.0) * r / d, rtol=1e-15)


def test_cheb_identity(rng):
    r = rng.standard_normal(5)
    for k in (1, 2, 7):
        C = ChebyshevOperator(lambda v: v, lambda v: v, SpectralInterval(1.0, 1.0), k)
        np.testing.assert_allclose(chebyshev_apply(C, r), r, rtol=1e-15)


def test_cheb_error_bound():
    n = 15
    A = lap1d(n)
    Ad = A.to_dense()
    d = A.diagonal()
    ev = np.linalg.eigvalsh(Ad / d[:, None])
    iv = SpectralInterval(ev[0], ev[-1])
    b = np.random.default_rng(1).standard_normal(n)
    xs = np.linalg.solve(Ad, b)
    nrm = math.sqrt(xs @ Ad @ xs)
    for k in range(0, 51):
        x = chebyshev_apply(ChebyshevOperator(A.matvec, lambda v: v / d, iv, k), b)
        e = x - xs
        err = math.sqrt(e @ Ad @ e) / nrm
        assert err <= chebyshev_bound(iv.kappa, k) + 1e-12, k


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), st.integers(0, 2**31 - 1))
def test_cheb_linear_deterministic(k, seed):
    rng = np.random.default_rng(seed)
    A = lap1d(12)
    d = A.diagonal()
    C = ChebyshevOperator(A.matvec, lambda v: v / d, SpectralInterval(0.01, 2.0), k)
    v, w = rng.standard_normal(12), rng.standard_normal(12)
    s = C(v + w)
    assert np.max(np.abs(s - (C(v) + C(w)))) <= 1e-13 * max(1.0, np.max(np.abs(s)))
    np.testing.assert_array_equal(C(v), C(v))


def test_cheb_mg_deterministic(backend, rng):
    A = poisson_matrix(16)
    H = build_mg_hierarchy(16)
    C = ChebyshevOperator(A.matvec, H, SpectralInterval(0.6, 1.05), 4)
    r = rng.standard_normal(225)
    np.testing.assert_array_equal(C(r), C(r))


# constraint preconditioner -----------------------------------------------------------

def ident(v):
    return v.copy()


def test_cp_hand():
    Q = ConstraintPrecond(ident, ident, ident, SparseMat.identity(1))
    g, curv = constraint_precond_apply(Q, BlockVecZ(np.ones(1), np.ones(1), np.ones(1)))
    np.testing.assert_array_equal(-g.flat(), [3, 2, 1])
    assert curv == 4.0  # <M~_u g_u, g_u> = 2 * 2


def test_cp_zero():
    Q = ConstraintPrecond(ident, ident, ident, SparseMat.identity(3))
    g, curv = constraint_precond_apply(Q, BlockVecZ.zeros(3, 3))
    assert g.norm() == 0 and curv == 0


def random_cp(rng, n=6, m=4):
    At = rng.standard_normal((n, n)) + n * np.eye(n)
    Mu = rng.standard_normal((m, m))
    Mu = Mu @ Mu.T + m * np.eye(m)
    B = rng.standard_normal((n, m))
    Q = ConstraintPrecond(lambda v: np.linalg.solve(At, v), lambda v: np.linalg.solve(At.T, v),
                          lambda v: np.linalg.solve(Mu, v), SparseMat.from_dense(B))
    Qd = np.block([[np.zeros((n, n)), np.zeros((n, m)), At.T],
                   [np.zeros((m, n)), Mu, -B.T],
                   [At, -B, np.zeros((n, n))]])
    return Q, Qd, At, Mu, B


@pytest.mark.parametrize("seed", range(5))
def test_cp_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    Q, Qd, At, Mu, B = random_cp(rng)
    r = BlockVecZ(rng.standard_normal(6), rng.standard_normal(4), rng.standard_normal(6))
    g, curv = constraint_precond_apply(Q, r)
    assert rel(g.flat(), -np.linalg.solve(Qd, r.flat())) <= 1e-12
    assert math.isclose(curv, g.u @ Mu @ g.u, rel_tol=1e-12)
    # feasibility for the surrogate constraint
    assert np.linalg.norm(At @ g.y - B @ g.u + r.p) <= 1e-10 * np.linalg.norm(r.p) + 1e-12
    # with r_p = 0 the curvature is -<r, g>
    r0 = BlockVecZ(r.y, r.u, np.zeros(6))
    g0, c0 = constraint_precond_apply(Q, r0)
    assert math.isclose(c0, -(r0.flat() @ g0.flat()), rel_tol=1e-12)


def test_cp_indefinite():
    Q = ConstraintPrecond(ident, ident, lambda v: -v, SparseMat.identity(1))
    with pytest.raises(IndefinitePreconditionerError):
        constraint_precond_apply(Q, BlockVecZ(np.ones(1), np.ones(1), np.ones(1)))


# mass preconditioner --------------------------------------------------------------

def test_mass_diagonal(rng):
    d = rng.random(8) + 0.5
    M = SparseMat.diag(d)
    c = Counter()
    mu = mass_precond(M, counter=c)
    u = rng.standard_normal(8)
    assert rel(mu(M.matvec(u)), u) <= 1e-10
    np.testing.assert_array_equal(mu(u), u / d)
    assert c["mu_solves"] == 2


def test_mass_consistent_1d():
    n, h = 10, 0.1
    M = SparseMat.from_scipy(sp.diags([np.full(n - 1, 1.0), np.full(n, 4.0), np.full(n - 1, 1.0)], [-1, 0, 1]) * h / 6)
    mu = mass_precond(M)
    P = np.column_stack([mu(e) for e in np.eye(n)])
    ev = np.sort(np.linalg.eigvals(P @ M.to_dense()).real)
    assert ev[-1] / ev[0] <= 1.1


def test_mass_rejects():
    with pytest.raises(ValueError):
        mass_precond(SparseMat.diag([1.0, 0.0]))
