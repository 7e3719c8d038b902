"""Solver backends for market constraint systems."""

from pathlib import Path

from flexclear.models.system import ConstraintSystem
from flexclear.solver.base import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
    IterateRecord,
    Solver,
    SolveReport,
    SolveStatus,
    UnsupportedProblemError,
    kkt_residuals,
)
from flexclear.solver.highs import HighsSolver
from flexclear.solver.interior_point import InteriorPointSolver, solve_lp, solve_socp

BACKENDS: dict[str, type[Solver]] = {
    "ipm": InteriorPointSolver,
    "highs": HighsSolver,
}


def make_solver(backend: str = "ipm", tol: float = DEFAULT_TOLERANCE, max_iter: int | None = None) -> Solver:
    """Instantiate a backend by name.

    Args:
        backend: ``ipm`` or ``highs``.
        tol: Convergence tolerance.
        max_iter: Iteration cap; the backend default when None.

    Raises:
        ValueError: Unknown backend name.
    """
    try:
        cls = BACKENDS[backend.lower()]
    except KeyError:
        raise ValueError(f"Unknown solver backend '{backend}', expected one of {', '.join(BACKENDS)}") from None
    if max_iter is None:
        return cls(tol=tol)
    return cls(tol=tol, max_iter=max_iter)


def solve_dump(path: Path, backend: str = "ipm", tol: float = DEFAULT_TOLERANCE) -> SolveReport:
    """Re-solve a constraint system saved with ``ConstraintSystem.save``."""
    return make_solver(backend, tol=tol).solve(ConstraintSystem.load(path))


__all__ = [
    "BACKENDS",
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOLERANCE",
    "HighsSolver",
    "InteriorPointSolver",
    "IterateRecord",
    "Solver",
    "SolveReport",
    "SolveStatus",
    "UnsupportedProblemError",
    "kkt_residuals",
    "make_solver",
    "solve_dump",
    "solve_lp",
    "solve_socp",
]
