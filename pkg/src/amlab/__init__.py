"""Monotone finite differences for the regularized Aronsson equation, its adjoint and its barriers."""

from .errors import AmlabError, ConfigError, DomainError, InputError, NumericalError
from .grid import Grid, GridField, build_grid
from .hamiltonian import (
    AnisotropicQuadratic,
    ConeSpec,
    Quadratic,
    SeparablePower,
    Tabulated,
    check_H1_H2,
    cone,
    legendre,
    mollify,
)
from .pde_solver import SolverConfig, SolverProblem, SolveResult, assemble_linearized, solve_regularized

__all__ = [
    "AmlabError",
    "AnisotropicQuadratic",
    "ConeSpec",
    "ConfigError",
    "DomainError",
    "Grid",
    "GridField",
    "InputError",
    "NumericalError",
    "Quadratic",
    "SeparablePower",
    "SolveResult",
    "SolverConfig",
    "SolverProblem",
    "Tabulated",
    "assemble_linearized",
    "build_grid",
    "check_H1_H2",
    "cone",
    "legendre",
    "mollify",
    "solve_regularized",
]
