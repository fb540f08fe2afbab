"""Parameter sweeps over solver configurations and their tabulation."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigurationError
from .krylov import minres, minres_preconditioner, ppcg
from .pdp import PdpTolerances, chebyshev_surrogate, pdp_oc
from .precond import ConstraintPrecond, build_mg_hierarchy, counted, mass_precond
from .problems import TARGETS, build_poisson_control

METHODS = ("pdp", "ppcg_exact", "minres_q1", "minres_q2")
GENERATORS = ("poisson",)

# column name -> type used when parsing CSV back
COLUMNS = {
    "index": int,
    "method": str,
    "nu": float,
    "lambda": float,
    "n_cells": int,
    "dofs": int,
    "outer_iters": int,
    "converged": int,
    "failed": int,
    "q_a_inner": int,
    "q_a_primal": int,
    "q_a_dual": int,
    "q_a_spectrum": int,
    "q_a_total": int,
    "a_inv_applies": int,
    "mu_solves": int,
    "final_error_estimate": float,
    "wall_time": float,
    "message": str,
}
TIMING_COLUMNS = ("wall_time",)


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep ``methods x n_cells x nus x lambdas`` on one problem family.

    JSON keys match the field names; ``problem`` holds the generator name and
    its parameters, e.g. ``{"generator": "poisson", "control_kind":
    "distributed", "target": "peak"}``.
    """

    methods: tuple = ("pdp",)
    nus: tuple = (1e-3,)
    lambdas: tuple = (1e-2,)
    n_cells: tuple = (16,)
    problem: dict = field(default_factory=lambda: {"generator": "poisson"})
    lambda_pdp: float = 1e-8
    minres_tol: float = 1e-8
    ppcg_tol: float = 1e-8
    max_outer: int = 50
    max_iter: int = 2000
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        for name in ("methods", "nus", "lambdas", "n_cells"):
            v = getattr(self, name)
            if isinstance(v, (str, int, float)):
                v = (v,)
            object.__setattr__(self, name, tuple(v))
            if not getattr(self, name):
                raise ConfigurationError(f"sweep axis {name!r} is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown methods {bad}; valid: {list(METHODS)}")
        gen = self.problem.get("generator", "poisson")
        if gen not in GENERATORS:
            raise ConfigurationError(f"unknown generator {gen!r}")
        unknown = set(self.problem) - {"generator", "control_kind", "target", "control_target"}
        if unknown:
            raise ConfigurationError(f"unknown problem keys {sorted(unknown)}")
        tgt = self.problem.get("target", "peak")
        if isinstance(tgt, str) and tgt not in TARGETS:
            raise ConfigurationError(f"unknown target {tgt!r}")
        if any(not nu > 0 for nu in self.nus):
            raise ConfigurationError("nu values must be positive")
        if any(not 0 < lam <= 1 for lam in self.lambdas):
            raise ConfigurationError("lambda values must lie in (0, 1]")
        if any(n < 2 or n & (n - 1) for n in self.n_cells):
            raise ConfigurationError("n_cells must be powers of two >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("methods", "nus", "lambdas", "n_cells"):
            d[k] = list(d[k])
        return d

    def points(self):
        return list(itertools.product(self.methods, self.n_cells, self.nus, self.lambdas))


def _problem(cfg: ExperimentConfig, n_cells, nu):
    p = dict(cfg.problem)
    p.pop("generator", None)
    return build_poisson_control(n_cells, nu, **p)


def _empty_row(index, method, nu, lam, n_cells) -> dict:
    row = {k: (0 if t is int else 0.0 if t is float else "") for k, t in COLUMNS.items()}
    row.update(index=index, method=method, nu=float(nu), n_cells=int(n_cells))
    row["lambda"] = float(lam)
    return row


def run_point(cfg: ExperimentConfig, index, method, n_cells, nu, lam, problem=None):
    """Run one sweep point; returns ``(row, report)``. Failures become rows.

    ``problem`` replaces the generated instance (it must live on an
    ``n_cells`` grid for the multigrid methods).
    """
    row = _empty_row(index, method, nu, lam, n_cells)
    t0 = time.perf_counter()
    report = None
    try:
        P = _problem(cfg, n_cells, nu) if problem is None else problem
        row["dofs"] = P.dofs
        counter = Counter()
        if method == "pdp":
            tols = PdpTolerances.common(lam, cfg.lambda_pdp)
            _, _, report = pdp_oc(P, tols, max_outer=cfg.max_outer, seed=cfg.seed)
            counter = report.counters
            row["outer_iters"] = report.iterations
            row["converged"] = int(report.converged)
            est = report.final_estimate
            if est is not None and est.lower_bound_e0 > 0:
                row["final_error_estimate"] = est.err_estimate / est.lower_bound_e0
        elif method == "ppcg_exact":
            lu = spla.splu(P.A.to_scipy().tocsc())
            mu = mass_precond(P.M_u, counter=counter)
            Q = ConstraintPrecond(counted(lambda v: lu.solve(v), counter, "a_inv_applies"),
                                  counted(lambda v: lu.solve(v, trans="T"), counter, "a_inv_applies"), mu, P.B)
            _, report = ppcg(P, Q, rel_tol=cfg.ppcg_tol, max_iter=cfg.max_iter)
            row["outer_iters"] = report.iterations
            row["converged"] = int(report.converged)
            h = report.residual_history
            row["final_error_estimate"] = h[-1] / h[0] if h and h[0] > 0 else 0.0
        else:
            QA = build_mg_hierarchy(n_cells)
            cheb = chebyshev_surrogate(P.A, QA, lam, counter=counter, seed=cfg.seed)
            kind = "Q1" if method == "minres_q1" else "Q2"
            pre = minres_preconditioner(P, kind, cheb, mass_precond(P.M_u, counter=counter), counter=counter)
            _, report = minres(P, pre, cfg.minres_tol, cfg.max_iter, counter=counter, method=method)
            row["outer_iters"] = report.iterations
            row["converged"] = int(report.converged)
            h = report.residual_history
            row["final_error_estimate"] = h[-1] / h[0] if h and h[0] > 0 else 0.0
        for role in ("inner", "primal", "dual", "spectrum"):
            row[f"q_a_{role}"] = int(counter.get(f"q_a_{role}", 0))
        row["q_a_total"] = sum(row[f"q_a_{r}"] for r in ("inner", "primal", "dual", "spectrum"))
        row["a_inv_applies"] = int(counter.get("a_inv_applies", 0))
        row["mu_solves"] = int(counter.get("mu_solves", 0))
        if not row["converged"]:
            row["failed"] = 1
            row["message"] = "not converged"
    except ConfigurationError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        row["failed"] = 1
        row["message"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    row["wall_time"] = time.perf_counter() - t0
    return row, report


def run_bench(config: ExperimentConfig, threads=1) -> list:
    """One row per sweep point, ordered by point index whatever the thread count."""
    pts = config.points()

    def job(i):
        m, n, nu, lam = pts[i]
        return run_point(config, i, m, n, nu, lam)[0]

    if threads <= 1:
        return [job(i) for i in range(len(pts))]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        rows = list(ex.map(job, range(len(pts))))
    return sorted(rows, key=lambda r: r["index"])


# ---------------------------------------------------------------------------------
# tables


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def emit_table(rows, format="csv", columns=None) -> str:
    if format == "csv":
        cols = list(columns or COLUMNS)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()
    if format == "markdown":
        return _markdown(rows)
    raise ConfigurationError(f"unknown format {format!r}")


def parse_csv(text) -> list:
    rd = csv.reader(io.StringIO(text))
    try:
        header = next(rd)
    except StopIteration:
        return []
    out = []
    for rec in rd:
        row = {}
        for k, v in zip(header, rec):
            t = COLUMNS.get(k, str)
            row[k] = t(v) if (t is not str and v != "") else v
        out.append(row)
    return out


def _markdown(rows) -> str:
    """Methods (and Lambda, grid) down, nu across; cells ``outer(total Q_A)``."""
    nus = sorted({r["nu"] for r in rows}, reverse=True)
    head = "| method | Λ | n_cells | " + " | ".join(f"ν={nu:g}" for nu in nus) + " |"
    sep = "|" + "---|" * (3 + len(nus))
    lines = [head, sep]
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["lambda"], r["n_cells"]), {})[r["nu"]] = r
    for (m, lam, n), cells in groups.items():
        vals = []
        for nu in nus:
            r = cells.get(nu)
            if r is None:
                vals.append("")
            elif r["failed"]:
                vals.append("x")
            else:
                total = r["q_a_total"] if r["q_a_total"] else r["a_inv_applies"]
                vals.append(f"{r['outer_iters']}({total})")
        lines.append(f"| {m} | {lam:g} | {n} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"
