"""Primal-dual projection solvers for equality-constrained quadratic problems."""

from ._backend import BACKEND
from .core import BlockVecX, BlockVecZ, SparseMat, dual_pairing, energy_norm, spmv
from .krylov import CgTrace, SolverReport, minres, modified_ppcg, pcg, ppcg, robust_surrogate
from .pdp import (
    PdpTolerances,
    ProgressEstimate,
    check_termination,
    condition_bounds,
    estimate_progress,
    pdp_general,
    pdp_oc,
)
from .problems import KktProblem, build_codim1, build_dense_toy, build_poisson_control, direct_solve_oracle

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlockVecX", "BlockVecZ", "SparseMat", "dual_pairing", "energy_norm", "spmv",
    "CgTrace", "SolverReport", "minres", "modified_ppcg", "pcg", "ppcg", "robust_surrogate",
    "PdpTolerances", "ProgressEstimate", "check_termination", "condition_bounds", "estimate_progress",
    "pdp_general", "pdp_oc", "KktProblem", "build_codim1", "build_dense_toy", "build_poisson_control",
    "direct_solve_oracle",
]
