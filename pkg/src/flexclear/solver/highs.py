"""Reference LP backend using the HiGHS solver shipped with scipy."""

import numpy as np
from scipy.optimize import linprog

from flexclear.models.system import ConstraintSystem
from flexclear.solver.base import Solver, SolveReport, SolveStatus, UnsupportedProblemError, kkt_residuals
from flexclear.utils.logging_config import LogContext, get_logger

logger = get_logger(__name__)

# HiGHS rejects feasibility tolerances below this value.
HIGHS_MIN_TOLERANCE = 1e-10
DEFAULT_HIGHS_MAX_ITER = 100_000

_STATUS = {0: SolveStatus.OPTIMAL, 2: SolveStatus.INFEASIBLE, 3: SolveStatus.UNBOUNDED}


class HighsSolver(Solver):
    """Linear programs only; marginals are returned as duals.

    ``max_iter`` caps simplex or IPM iterations inside HiGHS, so its default
    is far larger than the embedded solver's.
    """

    def __init__(self, tol: float = 1e-8, max_iter: int = DEFAULT_HIGHS_MAX_ITER, method: str = "highs"):
        super().__init__(tol=tol, max_iter=max_iter)
        self.method = method

    @property
    def name(self) -> str:
        return "highs"

    def solve(self, system: ConstraintSystem) -> SolveReport:
        """Solve a cone-free system.

        Raises:
            UnsupportedProblemError: The system carries cones.
        """
        if system.is_conic:
            raise UnsupportedProblemError("the HiGHS backend solves linear programs only")
        n = system.n_vars
        bounds = [
            (None if not np.isfinite(lo) else float(lo), None if not np.isfinite(hi) else float(hi))
            for lo, hi in zip(system.lb, system.ub, strict=True)
        ]
        feas_tol = max(self.tol, HIGHS_MIN_TOLERANCE)
        with LogContext(logger, "HiGHS solve", n_vars=n, n_eq=system.n_eq, n_ineq=system.n_ineq):
            res = linprog(
                system.c,
                A_ub=system.G if system.n_ineq else None,
                b_ub=system.h if system.n_ineq else None,
                A_eq=system.A_eq if system.n_eq else None,
                b_eq=system.b_eq if system.n_eq else None,
                bounds=bounds,
                method=self.method,
                options={
                    "maxiter": self.max_iter,
                    "primal_feasibility_tolerance": feas_tol,
                    "dual_feasibility_tolerance": feas_tol,
                },
            )

        status = _STATUS.get(res.status, SolveStatus.NUMERICAL_FAILURE)
        x = np.asarray(res.x, dtype=float) if res.x is not None else np.zeros(n)

        def marginals(block: object, size: int) -> np.ndarray:
            values = getattr(block, "marginals", None) if block is not None else None
            if values is None or len(values) != size:
                return np.zeros(size)
            return np.nan_to_num(np.asarray(values, dtype=float))

        eq_duals = marginals(getattr(res, "eqlin", None), system.n_eq)
        ineq_duals = -marginals(getattr(res, "ineqlin", None), system.n_ineq)
        lower_duals = marginals(getattr(res, "lower", None), n)
        upper_duals = -marginals(getattr(res, "upper", None), n)
        residuals = kkt_residuals(system, x, eq_duals, ineq_duals, lower_duals, upper_duals, [])

        message = str(res.message)
        if status is SolveStatus.OPTIMAL and max(residuals) > self.tol:
            logger.warning(f"HiGHS reported optimal but KKT residuals {residuals} exceed {self.tol:g}")
            status = SolveStatus.NUMERICAL_FAILURE
            message = f"{message} (residuals above tolerance)"

        return SolveReport(
            status=status,
            primal=x,
            equality_duals=eq_duals,
            inequality_duals=ineq_duals,
            lower_bound_duals=lower_duals,
            upper_bound_duals=upper_duals,
            cone_duals=[],
            objective=float(system.c @ x),
            kkt_residuals=residuals,
            iterations=int(getattr(res, "nit", 0) or 0),
            message=message,
            solver=self.name,
        )
