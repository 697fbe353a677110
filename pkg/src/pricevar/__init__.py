"""Dynamic pricing with inventory-dependent demand: closed-form solutions, a
direct-transcription solver, and optimality/invariant checks."""

__version__ = "0.1.0"

from .closedform import (CREquilibrium, ClosedFormMD, HypothesisError, cr_multi, cr_one_item,
                         cr_trajectory, eigen_lemma_check, md_multi, md_one_item)
from .model import (DomainError, ModelKind, ModelParams, Seasonality, StateSnapshot, Trajectory,
                    demand, make_snapshot, objective)
from .optimality import (revenue_projection_invariant, el_residuals, hamiltonian_invariant, invariance_report,
                         lerner_rule_check, recover_lambda)
from .varsolve import SolverConfig, SolverResult, compare_trajectories, solve_cr, solve_md

__all__ = [
    "CREquilibrium", "ClosedFormMD", "DomainError", "HypothesisError", "ModelKind", "ModelParams",
    "Seasonality", "SolverConfig", "SolverResult", "StateSnapshot", "Trajectory",
    "compare_trajectories", "revenue_projection_invariant", "cr_multi", "cr_one_item", "cr_trajectory",
    "demand", "eigen_lemma_check", "el_residuals", "hamiltonian_invariant", "invariance_report",
    "lerner_rule_check", "make_snapshot", "md_multi", "md_one_item", "objective", "recover_lambda",
    "solve_cr", "solve_md",
]
