"""Pluggable decision procedures for constraint conjunctions."""

from .base import ConstraintSolver, Decision, Sat, Unknown, Unsat, holds
from .builtin import BuiltinSolver

SOLVER_NAMES = ("builtin", "z3")


def get_solver(name: str = "builtin") -> ConstraintSolver:
    """Factory function to get a solver backend.

    Args:
        name: Backend name ('builtin' or 'z3')

    Returns:
        A fresh solver instance

    Raises:
        ValueError: If the backend is not supported
        ImportError: If the z3 backend is requested without z3-solver installed
    """
    name_lower = name.lower()
    if name_lower not in SOLVER_NAMES:
        supported = ", ".join(SOLVER_NAMES)
        raise ValueError(f"Unsupported solver: '{name}'. Supported solvers: {supported}")
    if name_lower == "z3":
        from .z3_solver import Z3Solver

        return Z3Solver()
    return BuiltinSolver()


__all__ = [
    "SOLVER_NAMES",
    "BuiltinSolver",
    "ConstraintSolver",
    "Decision",
    "Sat",
    "Unknown",
    "Unsat",
    "get_solver",
    "holds",
]
