"""Test problem generators and dense ground-truth solvers.

The optimal-control instances discretize

    min  1/2 |y - y_d|_G^2 + nu/2 |u - u_d|_U^2   s.t.  A y - B u = 0

on the unit square with a 5-point finite-difference Laplacian (homogeneous
Dirichlet boundary) and lumped masses. The toy generators produce small dense
instances of the abstract problem ``min q(x) s.t. x in x0 + V`` together with
a projection (range V, kernel W) and a surrogate subspace.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .core import BlockVecX, BlockVecZ, SparseMat, as_vec, read_matrix_market, write_matrix_market
from .errors import ConfigurationError, DimensionError, RankDeficiencyError

ORACLE_MAX_DIM = 5000


# ---------------------------------------------------------------------------------
# structured grid


@dataclass(frozen=True)
class GridMeta:
    n_cells: int
    h: float
    levels: int
    control_kind: str = "distributed"

    @property
    def n_interior(self) -> int:
        return (self.n_cells - 1) ** 2


def _is_power_of_two(n):
    return n >= 1 and n & (n - 1) == 0


def mg_levels(n_cells, coarsest_max=25):
    """Number of nested grids from ``n_cells`` down to the first with at most
    ``coarsest_max`` interior unknowns."""
    levels, n = 1, n_cells
    while (n - 1) ** 2 > coarsest_max and n % 2 == 0 and n > 2:
        n //= 2
        levels += 1
    return levels


def interior_coords(n_cells):
    h = 1.0 / n_cells
    t = np.arange(1, n_cells) * h
    # x varies fastest
    X, Y = np.meshgrid(t, t, indexing="xy")
    return X.ravel(), Y.ravel()


def poisson_matrix(n_cells, shift=0.0) -> SparseMat:
    """``h^-2 * stencil(4, -1, -1, -1, -1)`` on interior nodes, plus ``shift * I``."""
    m = n_cells - 1
    h = 1.0 / n_cells
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    L = (sp.kron(I, T) + sp.kron(T, I)) / h**2
    if shift:
        L = L + shift * sp.identity(m * m)
    return SparseMat.from_scipy(L)


TARGETS = {
    "zero": lambda x, y: np.zeros_like(x),
    "const": lambda x, y: np.ones_like(x),
    "bump": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    "peak": lambda x, y: np.exp(-50.0 * ((x - 0.3) ** 2 + (y - 0.6) ** 2)),
    "step": lambda x, y: np.where(x < 0.5, 1.0, -0.5),
}


def _sample(spec, x, y):
    if spec is None:
        return np.zeros_like(x)
    if callable(spec):
        return as_vec(spec(x, y)) * np.ones_like(x)
    if isinstance(spec, (int, float)):
        return float(spec) * np.ones_like(x)
    try:
        return TARGETS[spec](x, y)
    except KeyError:
        raise ConfigurationError(f"unknown target {spec!r}; known: {sorted(TARGETS)}") from None


# ---------------------------------------------------------------------------------
# optimal control


@dataclass(frozen=True)
class KktProblem:
    """Blocks of ``H z = s`` with ``H = [[M_y, 0, A^T], [0, M_u, -B^T], [A, -B, 0]]``.

    ``M_u`` already carries the Tychonov weight ``nu``. ``E`` is the optional
    state-to-control embedding used by :func:`pdpsolve.krylov.robust_surrogate`.
    """

    A: SparseMat
    B: SparseMat
    M_y: SparseMat
    M_u: SparseMat
    nu: float
    s_y: np.ndarray
    s_u: np.ndarray
    grid_meta: GridMeta | None = None
    E: SparseMat | None = None
    y_d: np.ndarray | None = field(default=None, repr=False)
    u_d: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        ny, nu_dim = self.A.shape[0], self.B.shape[1]
        if self.A.shape != (ny, ny):
            raise DimensionError("A must be square")
        if self.B.shape[0] != ny:
            raise DimensionError("B must map controls into the constraint space")
        if self.M_y.shape != (ny, ny) or self.M_u.shape != (nu_dim, nu_dim):
            raise DimensionError("mass blocks do not match state/control dimensions")
        if not self.nu > 0:
            raise ConfigurationError("nu must be positive")
        object.__setattr__(self, "s_y", as_vec(self.s_y))
        object.__setattr__(self, "s_u", as_vec(self.s_u))
        if self.s_y.shape != (ny,) or self.s_u.shape != (nu_dim,):
            raise DimensionError("right-hand side does not match block sizes")

    @property
    def n_state(self) -> int:
        return self.A.shape[0]

    @property
    def n_control(self) -> int:
        return self.B.shape[1]

    @property
    def dofs(self) -> int:
        return 2 * self.n_state + self.n_control

    def rhs(self) -> BlockVecZ:
        return BlockVecZ(self.s_y, self.s_u, np.zeros(self.n_state))

    def zeros(self) -> BlockVecZ:
        return BlockVecZ.zeros(self.n_state, self.n_control)

    def M_apply(self, x: BlockVecX) -> BlockVecX:
        return BlockVecX(self.M_y.matvec(x.y), self.M_u.matvec(x.u))

    def C_apply(self, x: BlockVecX) -> np.ndarray:
        return self.A.matvec(x.y) - self.B.matvec(x.u)

    def C_adjoint(self, p) -> BlockVecX:
        return BlockVecX(self.A.rmatvec(p), -self.B.rmatvec(p))

    def objective(self, x: BlockVecX) -> float:
        """``1/2 <M x, x> - <s_x, x>`` (the tracking functional up to a constant)."""
        Mx = self.M_apply(x)
        return 0.5 * Mx.dot(x) - (float(self.s_y @ x.y) + float(self.s_u @ x.u))

    def assemble_dense(self) -> np.ndarray:
        A, B = self.A.to_dense(), self.B.to_dense()
        ny, nc = self.n_state, self.n_control
        H = np.zeros((2 * ny + nc, 2 * ny + nc))
        H[:ny, :ny] = self.M_y.to_dense()
        H[:ny, ny + nc :] = A.T
        H[ny : ny + nc, ny : ny + nc] = self.M_u.to_dense()
        H[ny : ny + nc, ny + nc :] = -B.T
        H[ny + nc :, :ny] = A
        H[ny + nc :, ny : ny + nc] = -B
        return H

    def export(self, directory):
        """Write MatrixMarket blocks, vectors and a ``meta.txt`` key=value file."""
        from .core import write_vector

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("A", "B", "M_y", "M_u"):
            write_matrix_market(d / f"{name}.mtx", getattr(self, name))
        if self.E is not None:
            write_matrix_market(d / "E.mtx", self.E)
        write_vector(d / "s_y.txt", self.s_y)
        write_vector(d / "s_u.txt", self.s_u)
        g = self.grid_meta
        meta = {
            "n_cells": g.n_cells if g else "",
            "nu": repr(float(self.nu)),
            "control_kind": g.control_kind if g else "custom",
            "h": repr(g.h) if g else "",
            "levels": g.levels if g else "",
        }
        (d / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))

    @classmethod
    def load(cls, directory) -> "KktProblem":
        from .core import read_vector

        d = Path(directory)
        meta = dict(
            line.split("=", 1) for line in (d / "meta.txt").read_text().splitlines() if "=" in line
        )
        grid = None
        if meta.get("n_cells"):
            grid = GridMeta(int(meta["n_cells"]), float(meta["h"]), int(meta["levels"]), meta["control_kind"])
        E = read_matrix_market(d / "E.mtx") if (d / "E.mtx").exists() else None
        return cls(
            A=read_matrix_market(d / "A.mtx"),
            B=read_matrix_market(d / "B.mtx"),
            M_y=read_matrix_market(d / "M_y.mtx"),
            M_u=read_matrix_market(d / "M_u.mtx"),
            nu=float(meta["nu"]),
            s_y=read_vector(d / "s_y.txt"),
            s_u=read_vector(d / "s_u.txt"),
            grid_meta=grid,
            E=E,
        )


def build_poisson_control(n_cells, nu, control_kind="distributed", target="peak", control_target=None):
    """Elliptic optimal control on the unit square.

    ``target`` names the desired state (see ``TARGETS``; a number or a
    callable ``f(x, y)`` also works); ``control_target`` the control shift
    ``u_d``. Distributed control acts pointwise on the interior nodes;
    boundary control acts as a flux on the top face.
    """
    if not isinstance(n_cells, (int, np.integer)) or n_cells < 2 or not _is_power_of_two(n_cells):
        raise ConfigurationError(f"n_cells must be a power of two >= 2, got {n_cells!r}")
    if not nu > 0:
        raise ConfigurationError("nu must be positive")
    if control_kind not in ("distributed", "boundary"):
        raise ConfigurationError(f"unknown control_kind {control_kind!r}")
    n_cells = int(n_cells)
    h = 1.0 / n_cells
    m = n_cells - 1
    N = m * m
    A = poisson_matrix(n_cells)
    M_y = SparseMat.identity(N, h * h)
    X, Y = interior_coords(n_cells)
    y_d = _sample(target, X, Y)
    E = None
    if control_kind == "distributed":
        B = SparseMat.identity(N, h * h)
        E = SparseMat.identity(N)
        M_u = SparseMat.identity(N, nu * h * h)
        u_d = _sample(control_target, X, Y)
    else:
        # control node i sits on the top face above interior node (i, m)
        rows = (m - 1) * m + np.arange(m)
        B = SparseMat.from_triplets(rows, np.arange(m), np.full(m, h), (N, m))
        M_u = SparseMat.identity(m, nu * h)
        xb = np.arange(1, n_cells) * h
        u_d = _sample(control_target, xb, np.ones_like(xb))
    grid = GridMeta(n_cells, h, mg_levels(n_cells), control_kind)
    return KktProblem(
        A=A,
        B=B,
        M_y=M_y,
        M_u=M_u,
        nu=float(nu),
        s_y=M_y.matvec(y_d),
        s_u=M_u.matvec(u_d),
        grid_meta=grid,
        E=E,
        y_d=y_d,
        u_d=u_d,
    )


def kkt_apply(P: KktProblem, z: BlockVecZ) -> BlockVecZ:
    """Apply ``H`` blockwise."""
    if z.y.shape[0] != P.n_state or z.u.shape[0] != P.n_control or z.p.shape[0] != P.n_state:
        raise DimensionError("block vector does not match problem dimensions")
    return BlockVecZ(
        P.M_y.matvec(z.y) + P.A.rmatvec(z.p),
        P.M_u.matvec(z.u) - P.B.rmatvec(z.p),
        P.A.matvec(z.y) - P.B.matvec(z.u),
    )


def make_kkt(M_y, M_u, A, B, s_y, s_u, nu=1.0) -> KktProblem:
    """Small hand-built instance from dense blocks (``M_u`` taken as given)."""

    def mat(a):
        return a if isinstance(a, SparseMat) else SparseMat.from_dense(a)

    return KktProblem(mat(A), mat(B), mat(M_y), mat(M_u), nu, as_vec(s_y), as_vec(s_u))


# ---------------------------------------------------------------------------------
# abstract toy problems


@dataclass(frozen=True)
class Codim1Problem:
    """``V = n^perp``, ``V~ = n~^perp``, ``W = span n`` with identity metric."""

    dim: int
    n: np.ndarray
    n_tilde: np.ndarray
    theta: float
    b: SparseMat

    @property
    def predicted_kappa(self) -> float:
        return 1.0 / math.cos(self.theta) ** 2

    @property
    def predicted_rate(self) -> float:
        k = self.predicted_kappa
        return (k - 1.0) / (k + 1.0)

    def intersect(self, v) -> np.ndarray:
        """The single point of ``(v + W) cap V~``."""
        v = as_vec(v)
        t = -(self.n_tilde @ v) / (self.n_tilde @ self.n)
        return v + t * self.n


def build_codim1(theta, dim=3) -> Codim1Problem:
    if not 0.0 <= theta < math.pi / 2:
        raise ConfigurationError("theta must lie in [0, pi/2): pi/2 violates the subspace condition")
    if dim < 2:
        raise ConfigurationError("dim must be at least 2")
    n = np.zeros(dim)
    n[0] = 1.0
    nt = np.zeros(dim)
    nt[0], nt[1] = math.cos(theta), math.sin(theta)
    kappa = 1.0 / math.cos(theta) ** 2
    if kappa > 1e4:
        warnings.warn(f"codimension-1 geometry is ill-conditioned (kappa = {kappa:.3g})", stacklevel=2)
    return Codim1Problem(dim, n, nt, float(theta), SparseMat.identity(dim))


@dataclass(frozen=True)
class DenseToy:
    """Dense instance of ``min 1/2 x^T b x + q_lin^T x`` over ``x0 + V``.

    Columns of ``V_basis``, ``Vtilde_basis`` and ``W_basis`` span V, the
    surrogate subspace and the projection kernel.
    """

    b_mat: np.ndarray
    b_tilde_mat: np.ndarray
    V_basis: np.ndarray
    Vtilde_basis: np.ndarray
    W_basis: np.ndarray
    q_lin: np.ndarray
    x0: np.ndarray

    @property
    def dim(self) -> int:
        return self.b_mat.shape[0]

    def projection(self) -> np.ndarray:
        """Matrix of the projection with range V and kernel W."""
        K = sla.null_space(self.W_basis.T)  # annihilator of W
        V = self.V_basis
        return V @ np.linalg.solve(K.T @ V, K.T)

    def constraint(self) -> np.ndarray:
        """Rows spanning the annihilator of V, so that ``V = ker C``."""
        return sla.null_space(self.V_basis.T).T

    def assumption_residuals(self) -> np.ndarray:
        """Least-squares residual of each V basis vector in ``span[W, V~]``."""
        WV = np.hstack([self.W_basis, self.Vtilde_basis])
        coef, *_ = np.linalg.lstsq(WV, self.V_basis, rcond=None)
        return np.linalg.norm(WV @ coef - self.V_basis, axis=0)

    def solution(self) -> np.ndarray:
        """Exact minimizer by reduction to V coordinates."""
        V = self.V_basis
        g0 = self.b_mat @ self.x0 + self.q_lin
        c = np.linalg.solve(V.T @ self.b_mat @ V, -V.T @ g0)
        return self.x0 + V @ c


def _random_spd(rng, dim, spread):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    ev = np.logspace(0.0, math.log10(spread), dim) if dim > 1 else np.ones(1)
    rng.shuffle(ev)
    M = (Q * ev) @ Q.T
    return 0.5 * (M + M.T)


def build_dense_toy(dim, dim_V, seed=0, spd_spread=10.0, kind="graph", tilt=0.5, orthogonal=False,
                    tilde_equals_b=False) -> DenseToy:
    """Random toy instance satisfying ``V in W + V~`` by construction.

    kind="graph": ``V~ = {v + W G v}``, a tilted copy of V (so ``W + V~ = X``);
    kind="superset": ``V~`` contains V plus extra random directions.
    ``orthogonal=True`` chooses ``W = V^perp``.
    """
    if not 1 <= dim_V < dim:
        raise DimensionError("need 1 <= dim_V < dim")
    if spd_spread < 1:
        raise ConfigurationError("spd_spread must be >= 1")
    rng = np.random.default_rng(seed)
    b = _random_spd(rng, dim, spd_spread)
    b_tilde = b.copy() if tilde_equals_b else _random_spd(rng, dim, spd_spread)
    V, _ = np.linalg.qr(rng.standard_normal((dim, dim_V)))
    if orthogonal:
        W = sla.null_space(V.T)
    else:
        W = rng.standard_normal((dim, dim - dim_V))
    if kind == "graph":
        G = rng.standard_normal((dim - dim_V, dim_V))
        Vt = V + tilt * W @ G
    elif kind == "superset":
        extra = rng.standard_normal((dim, max(1, (dim - dim_V) // 2)))
        Vt = np.hstack([V, extra])
    else:
        raise ConfigurationError(f"unknown toy kind {kind!r}")
    Vt, _ = np.linalg.qr(Vt)
    q_lin = rng.standard_normal(dim)
    x0 = np.zeros(dim)
    return DenseToy(b, b_tilde, V, Vt, W, q_lin, x0)


# ---------------------------------------------------------------------------------
# dense oracle


def _dense_saddle_solve(K, rhs):
    n = K.shape[0]
    if n > ORACLE_MAX_DIM:
        raise DimensionError(f"oracle limited to {ORACLE_MAX_DIM} unknowns, got {n}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu, piv = sla.lu_factor(K, check_finite=True)
        except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise RankDeficiencyError(str(exc)) from exc
    d = np.abs(np.diag(lu))
    if d.min() <= n * np.finfo(float).eps * max(d.max(), 1e-300):
        raise RankDeficiencyError("assembled saddle-point matrix is numerically singular")
    sol = sla.lu_solve((lu, piv), rhs)
    res = np.linalg.norm(K @ sol - rhs)
    if res > 1e-10 * max(np.linalg.norm(rhs), 1e-300) and np.linalg.norm(rhs) > 0:
        raise RankDeficiencyError(f"oracle residual {res:.2e} too large")
    return sol


def direct_solve_oracle(P):
    """Dense LU solution of the saddle-point system.

    For a :class:`KktProblem` returns ``(BlockVecX, p)``; for a
    :class:`DenseToy` returns ``(x, multiplier)`` with the constraint rows from
    :meth:`DenseToy.constraint` and ``x - x0 in V``.
    """
    if isinstance(P, KktProblem):
        H = P.assemble_dense()
        s = P.rhs().flat()
        sol = _dense_saddle_solve(H, s)
        z = BlockVecZ.from_flat(sol, P.n_state, P.n_control)
        return z.x, z.p
    if isinstance(P, DenseToy):
        C = P.constraint()
        m, n = C.shape
        K = np.block([[P.b_mat, C.T], [C, np.zeros((m, m))]])
        rhs = np.concatenate([-P.q_lin, C @ P.x0])
        sol = _dense_saddle_solve(K, rhs)
        return sol[:n], sol[n:]
    raise TypeError(f"no oracle for {type(P).__name__}")
