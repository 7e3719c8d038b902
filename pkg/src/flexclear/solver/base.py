"""Solver interface and solve reports."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from flexclear.models.system import ConstraintSystem
from flexclear.solver.cones import cone_entries, cone_violation

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITER = 200


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    OPTIMAL_INACCURATE = "optimal_inaccurate"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class UnsupportedProblemError(ValueError):
    """The backend cannot handle this kind of system."""


@dataclass(frozen=True)
class IterateRecord:
    """One row of the convergence trace."""

    iteration: int
    primal_residual: float
    dual_residual: float
    gap: float
    mu: float
    step: float
    sigma: float


@dataclass
class SolveReport:
    """Outcome of one solve.

    Duals are sensitivities of the optimal objective: ``equality_duals[k]`` is
    d(objective)/d(b_eq[k]). Inequality, bound and cone duals are
    non-negative multipliers of their ``<=`` rows or cones.

    Attributes:
        status: Final status.
        primal: Primal point (best iterate when not optimal).
        equality_duals: One multiplier per equality row.
        inequality_duals: One multiplier per ``G x <= h`` row.
        lower_bound_duals: Multipliers of ``x >= lb``.
        upper_bound_duals: Multipliers of ``x <= ub``.
        cone_duals: Dual vector per cone, in the cone's own coordinates.
        objective: ``c'x``.
        kkt_residuals: Relative max-norm (primal, dual, complementarity) residuals.
        iterations: Iteration count.
        trace: Per-iterate convergence records.
        message: Backend message.
    """

    status: SolveStatus
    primal: np.ndarray
    equality_duals: np.ndarray
    inequality_duals: np.ndarray
    lower_bound_duals: np.ndarray
    upper_bound_duals: np.ndarray
    cone_duals: list[np.ndarray]
    objective: float
    kkt_residuals: tuple[float, float, float]
    iterations: int
    trace: list[IterateRecord] = field(default_factory=list)
    message: str = ""
    solver: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def has_solution(self) -> bool:
        """Optimal, or stalled at a point that meets the relaxed tolerance."""
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.OPTIMAL_INACCURATE)

    def summary(self) -> dict[str, object]:
        return {
            "solver": self.solver,
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residuals": list(self.kkt_residuals),
            "message": self.message,
        }


def kkt_residuals(
    system: ConstraintSystem,
    x: np.ndarray,
    eq_duals: np.ndarray,
    ineq_duals: np.ndarray,
    lower_duals: np.ndarray,
    upper_duals: np.ndarray,
    cone_duals: list[np.ndarray],
) -> tuple[float, float, float]:
    """Relative KKT residuals of a primal-dual point in the system's own units.

    Returns:
        Tuple of (primal infeasibility, dual infeasibility, complementarity),
        each a max-norm scaled by one plus the size of the data it measures.
    """
    A, G = system.A_eq, system.G
    lb, ub = system.lb, system.ub
    finite_lb, finite_ub = np.isfinite(lb), np.isfinite(ub)

    def inf_norm(v: np.ndarray) -> float:
        return float(np.max(np.abs(v))) if v.size else 0.0

    eq_res = inf_norm(A @ x - system.b_eq) / (1.0 + inf_norm(system.b_eq))
    ineq_slack = system.h - G @ x if system.n_ineq else np.zeros(0)
    ineq_res = inf_norm(np.minimum(ineq_slack, 0.0)) / (1.0 + inf_norm(system.h))
    bound_viol = np.concatenate([np.minimum(x - lb, 0.0)[finite_lb], np.minimum(ub - x, 0.0)[finite_ub]])
    bound_res = inf_norm(bound_viol) / (1.0 + inf_norm(np.concatenate([lb[finite_lb], ub[finite_ub]])))
    cone_res = 0.0
    for cone in system.cones:
        s = cone_entries(cone, x)
        cone_res = max(cone_res, cone_violation(cone.kind, s) / (1.0 + inf_norm(cone.h)))
    primal = max(eq_res, ineq_res, bound_res, cone_res)

    # Lagrangian gradient: c - A'y + G'z - z_lb + z_ub + sum_k G_k' z_k
    grad = system.c - A.T @ eq_duals
    if system.n_ineq:
        grad = grad + G.T @ ineq_duals
    grad = grad - lower_duals + upper_duals
    for cone, z in zip(system.cones, cone_duals, strict=True):
        grad = grad + cone.G.T @ z
    dual = inf_norm(grad) / (1.0 + inf_norm(system.c))
    neg = [np.minimum(ineq_duals, 0.0), np.minimum(lower_duals, 0.0), np.minimum(upper_duals, 0.0)]
    dual = max(dual, *(inf_norm(v) for v in neg))
    for cone, z in zip(system.cones, cone_duals, strict=True):
        dual = max(dual, cone_violation(cone.kind, z))

    comp_terms = [0.0]
    if system.n_ineq:
        comp_terms.append(float(np.abs(ineq_slack * ineq_duals).sum()))
    comp_terms.append(float(np.abs((x[finite_lb] - lb[finite_lb]) * lower_duals[finite_lb]).sum()))
    comp_terms.append(float(np.abs((ub[finite_ub] - x[finite_ub]) * upper_duals[finite_ub]).sum()))
    for cone, z in zip(system.cones, cone_duals, strict=True):
        comp_terms.append(abs(float(cone_entries(cone, x) @ z)))
    objective = float(system.c @ x)
    complementarity = sum(comp_terms) / (1.0 + abs(objective))
    return primal, dual, complementarity


class Solver(ABC):
    """A backend turning a constraint system into a SolveReport.

    Backends never raise for infeasible, unbounded or stalled problems; they
    report the outcome through the status.
    """

    def __init__(self, tol: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER):
        if not 0 < tol <= 1e-4:
            raise ValueError(f"tolerance must lie in (0, 1e-4], got {tol}")
        if max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {max_iter}")
        self.tol = tol
        self.max_iter = max_iter

    @property
    def name(self) -> str:
        return self.__class__.__name__

    @abstractmethod
    def solve(self, system: ConstraintSystem) -> SolveReport:
        """Solve a system.

        Args:
            system: Constraint system.

        Returns:
            SolveReport with status, primal point and duals.
        """
