"""Mean-field Hamiltonian delay equations: critical loops and Hessian nullity."""

__version__ = "0.1.0"

from .core import Loop, FieldAlongLoop, TimeGrid, complex_structure, omega
from .exceptions import (
    DomainError,
    DomainExitError,
    HamDelayError,
    IntegrationBlowupError,
    InvalidArgumentError,
    NumericalError,
    PreconditionError,
    SolverFailure,
)
from .hessian import CriticalPoint, NullityAnalyzer, NullityReport, direct_hessian, nullity_report, reduce_to_operator
from .kepler import KeplerTransform, PlanarLoop, kepler_residual, levi_civita_orbit, time_transform
from .operator import OperatorSpec, SpectralReport, commuting_kernel, numerical_nullity, operator_nullity, random_instance
from .pair import PairSpec, action, critical_residual, is_commuting, mean_value
from .solver import SelfConsistentSolver, SolveConfig, bov_solve, self_consistent_solve, solve_system
from .symmetry import MonoidElement, act, compose, proposition_check, pullback_pair
from .systems import get_system

__all__ = [
    "CriticalPoint", "DomainError", "DomainExitError", "FieldAlongLoop", "HamDelayError",
    "IntegrationBlowupError", "InvalidArgumentError", "KeplerTransform", "Loop", "MonoidElement",
    "NullityAnalyzer", "NullityReport", "NumericalError", "OperatorSpec", "PairSpec", "PlanarLoop",
    "PreconditionError", "SelfConsistentSolver", "SolveConfig", "SolverFailure", "SpectralReport", "TimeGrid",
    "act", "action", "bov_solve", "commuting_kernel", "complex_structure", "compose", "critical_residual",
    "direct_hessian", "get_system", "is_commuting", "kepler_residual", "levi_civita_orbit", "mean_value",
    "nullity_report", "numerical_nullity", "omega", "operator_nullity", "proposition_check", "pullback_pair",
    "random_instance", "reduce_to_operator", "self_consistent_solve", "solve_system", "time_transform",
]
