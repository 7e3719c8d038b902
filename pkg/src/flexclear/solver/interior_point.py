"""Primal-dual interior-point method for linear and second-order-cone programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step. Each iteration factors one quasi-definite KKT
matrix with a sparse LU and reuses it for the three solves of the step,
refining every solve against the unregularized matrix. A factorization
that fails, or a step that collapses, is retried with a larger
regularization before the run is declared stalled.

A linear program is the cone-free special case; the same code path yields
primal points and duals for both market formulations.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

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
from flexclear.solver.cones import NTScaling, ProductCone
from flexclear.solver.presolve import ConicProblem, Equilibration, FullSolution, equilibrate, postsolve, presolve
from flexclear.utils.logging_config import LogContext, get_logger

logger = get_logger(__name__)

STEP_FACTOR = 0.99
MIN_STEP = 1e-12
REGULARIZATION_GROWTH = 100.0
MAX_REGULARIZATION = 1e-5


class _KKTSystem:
    """Factored ``[[d I, A', G'], [A, -d I, 0], [G, 0, -(W^2 + d I)]]``."""

    def __init__(
        self,
        A: sp.csr_matrix,
        G: sp.csr_matrix,
        W2: sp.spmatrix,
        regularization: float,
        refinement_steps: int,
    ):
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.A, self.G, self.W2 = A, G, sp.csr_matrix(W2)
        self.n, self.p, self.m = n, p, m
        self.refinement_steps = refinement_steps
        d = regularization
        # Empty blocks are left out; bmat does not take zero-sized blocks everywhere.
        top: list[sp.spmatrix | None] = [d * sp.identity(n)]
        rows: list[list[sp.spmatrix | None]] = [top]
        if p:
            top.append(A.T)
            rows.append([A, -d * sp.identity(p)] + ([None] if m else []))
        if m:
            top.append(G.T)
            rows.append([G] + ([None] if p else []) + [-(self.W2 + d * sp.identity(m))])
        self.lu = splu(sp.bmat(rows, format="csc"))

    def _apply(self, v: np.ndarray) -> np.ndarray:
        n, p = self.n, self.p
        vx, vy, vz = v[:n], v[n : n + p], v[n + p :]
        out = np.empty_like(v)
        out[:n] = self.G.T @ vz + (self.A.T @ vy if p else 0.0)
        if p:
            out[n : n + p] = self.A @ vx
        out[n + p :] = self.G @ vx - self.W2 @ vz
        return out

    def solve(self, rx: np.ndarray, ry: np.ndarray, rz: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rhs = np.concatenate([rx, ry, rz])
        sol = self.lu.solve(rhs)
        scale = 1.0 + float(np.max(np.abs(rhs))) if rhs.size else 1.0
        for _ in range(self.refinement_steps):
            res = rhs - self._apply(sol)
            if float(np.max(np.abs(res))) <= 1e-14 * scale:
                break
            sol = sol + self.lu.solve(res)
        n, p = self.n, self.p
        return sol[:n], sol[n : n + p], sol[n + p :]


@dataclass
class _Point:
    """Iterate (or search direction) of the homogeneous embedding."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    tau: float
    kappa: float

    def moved(self, step: float, d: "_Point") -> "_Point":
        return _Point(
            self.x + step * d.x,
            self.y + step * d.y,
            self.z + step * d.z,
            self.s + step * d.s,
            self.tau + step * d.tau,
            self.kappa + step * d.kappa,
        )


class InteriorPointSolver(Solver):
    """Embedded conic interior-point solver (default backend).

    When the KKT matrix cannot be factored, or the step length collapses, the
    Newton step is retried with a larger regularization and more refinement
    passes. A run that still stalls ends ``optimal_inaccurate`` when its best
    iterate meets ``relaxed_tol`` and ``numerical_failure`` otherwise.
    """

    def __init__(
        self,
        tol: float = DEFAULT_TOLERANCE,
        max_iter: int = DEFAULT_MAX_ITER,
        regularization: float = 1e-9,
        refinement_steps: int = 8,
        relaxed_tol: float | None = None,
    ):
        super().__init__(tol=tol, max_iter=max_iter)
        self.regularization = regularization
        self.refinement_steps = refinement_steps
        self.relaxed_tol = math.sqrt(tol) if relaxed_tol is None else relaxed_tol
        if self.relaxed_tol < tol:
            raise ValueError(f"relaxed tolerance {self.relaxed_tol} is below the tolerance {tol}")

    @property
    def name(self) -> str:
        return "ipm"

    def solve(self, system: ConstraintSystem) -> SolveReport:
        """Solve a linear or conic constraint system.

        Args:
            system: Constraint system.

        Returns:
            SolveReport. Infeasible, unbounded and stalled runs are reported
            through the status, with the best iterate attached.
        """
        with LogContext(
            logger, "interior-point solve", n_vars=system.n_vars, n_eq=system.n_eq, cones=len(system.cones)
        ) as ctx:
            problem = presolve(system)
            if problem.status is not None:
                report = self._report_without_iterations(system, problem, problem.status, problem.message)
            elif problem.n == 0:
                report = self._report_without_iterations(system, problem, None, "all variables fixed by presolve")
            else:
                scaled, scaling = equilibrate(problem)
                report = self._iterate(system, problem, scaled, scaling)
        logger.debug(
            f"ipm: {report.status.value} after {report.iterations} iterations in {ctx.elapsed:.3f}s, "
            f"objective {report.objective:.10g}, residuals {tuple(f'{r:.2e}' for r in report.kkt_residuals)}"
        )
        return report

    def regularization_ladder(self) -> list[tuple[float, int]]:
        """(regularization, refinement passes) pairs tried in turn for one factorization."""
        reg, refine = self.regularization, self.refinement_steps
        ladder = [(reg, refine)]
        while reg * REGULARIZATION_GROWTH <= MAX_REGULARIZATION * (1.0 + 1e-9):
            reg *= REGULARIZATION_GROWTH
            refine *= 2
            ladder.append((reg, refine))
        return ladder

    def _report_without_iterations(
        self,
        system: ConstraintSystem,
        problem: ConicProblem,
        status: SolveStatus | None,
        message: str,
    ) -> SolveReport:
        if status is None:
            full = postsolve(system, problem, np.zeros(0), np.zeros(0), np.zeros(0))
            residuals = self._residuals(system, full)
            status = SolveStatus.OPTIMAL if max(residuals) <= self.tol else SolveStatus.NUMERICAL_FAILURE
        else:
            full = FullSolution(
                x=problem.x_fixed.copy(),
                eq_duals=np.zeros(system.n_eq),
                ineq_duals=np.zeros(system.n_ineq),
                lower_duals=np.zeros(system.n_vars),
                upper_duals=np.zeros(system.n_vars),
                cone_duals=[np.zeros(k.dim) for k in system.cones],
            )
            residuals = (math.inf, math.inf, math.inf)
        return self._report(system, full, status, residuals, 0, [], message)

    @staticmethod
    def _residuals(system: ConstraintSystem, full: FullSolution) -> tuple[float, float, float]:
        return kkt_residuals(
            system, full.x, full.eq_duals, full.ineq_duals, full.lower_duals, full.upper_duals, full.cone_duals
        )

    def _report(
        self,
        system: ConstraintSystem,
        full: FullSolution,
        status: SolveStatus,
        residuals: tuple[float, float, float],
        iterations: int,
        trace: list[IterateRecord],
        message: str,
    ) -> SolveReport:
        return SolveReport(
            status=status,
            primal=full.x,
            equality_duals=full.eq_duals,
            inequality_duals=full.ineq_duals,
            lower_bound_duals=full.lower_duals,
            upper_bound_duals=full.upper_duals,
            cone_duals=full.cone_duals,
            objective=float(system.c @ full.x),
            kkt_residuals=residuals,
            iterations=iterations,
            trace=trace,
            message=message,
            solver=self.name,
        )

    def _factor(
        self, A: sp.csr_matrix, G: sp.csr_matrix, W2: sp.spmatrix, ladder: list[tuple[float, int]]
    ) -> tuple[_KKTSystem | None, str]:
        error = ""
        for reg, refine in ladder:
            try:
                return _KKTSystem(A, G, W2, reg, refine), ""
            except RuntimeError as err:
                error = f"KKT factorization failed: {err}"
        return None, error

    def _iterate(
        self,
        system: ConstraintSystem,
        problem: ConicProblem,
        scaled: ConicProblem,
        scaling: Equilibration,
    ) -> SolveReport:
        A, G, b, h, c = scaled.A, scaled.G, scaled.b, scaled.h, scaled.c
        cone: ProductCone = scaled.cone
        n, p, m = len(c), A.shape[0], G.shape[0]
        degree = cone.degree + 1
        ladder = self.regularization_ladder()

        def unscale(pt: _Point) -> FullSolution:
            xu = scaling.col * pt.x / pt.tau
            yu = scaling.eq_row * pt.y / (scaling.cost * pt.tau)
            zu = scaling.ineq_row * pt.z / (scaling.cost * pt.tau)
            return postsolve(system, problem, xu, yu, zu)

        kkt, error = self._factor(A, G, sp.identity(m), ladder)
        if kkt is None:
            return self._failure(system, problem, f"initial factorization failed: {error}")
        x, _, zt = kkt.solve(np.zeros(n), b, h)
        s = cone.shift_interior(-zt)
        _, y, zt = kkt.solve(-c, np.zeros(p), np.zeros(m))
        pt = _Point(x, y, cone.shift_interior(zt), s, 1.0, 1.0)

        trace: list[IterateRecord] = []
        best: tuple[float, FullSolution, tuple[float, float, float]] | None = None
        status = SolveStatus.NUMERICAL_FAILURE
        message = "iteration limit reached"
        stalled = False
        step, sigma = 0.0, 0.0
        iteration = 0

        for iteration in range(self.max_iter + 1):
            r1 = (A.T @ pt.y if p else 0.0) + G.T @ pt.z + c * pt.tau
            ry = A @ pt.x - b * pt.tau if p else np.zeros(0)
            r3 = G @ pt.x + pt.s - h * pt.tau
            r4 = float(c @ pt.x + b @ pt.y + h @ pt.z) + pt.kappa
            mu = (float(pt.s @ pt.z) + pt.tau * pt.kappa) / degree

            full = unscale(pt)
            residuals = self._residuals(system, full)
            score = max(residuals)
            if best is None or score < best[0]:
                best = (score, full, residuals)
            trace.append(IterateRecord(iteration, residuals[0], residuals[1], residuals[2], mu, step, sigma))
            logger.debug(
                f"ipm it {iteration:3d}: pres {residuals[0]:.2e} dres {residuals[1]:.2e} "
                f"comp {residuals[2]:.2e} mu {mu:.2e} step {step:.3f} sigma {sigma:.3f} "
                f"tau {pt.tau:.2e} kappa {pt.kappa:.2e}"
            )

            if score <= self.tol:
                status, message = SolveStatus.OPTIMAL, "converged"
                break

            if pt.tau < pt.kappa:
                byhz = float(b @ pt.y + h @ pt.z)
                if byhz < 0:
                    pinf = float(np.max(np.abs(r1 - c * pt.tau))) / -byhz
                    if pinf <= self.tol:
                        status, message = SolveStatus.INFEASIBLE, "primal infeasibility certificate found"
                        break
                cx = float(c @ pt.x)
                if cx < 0:
                    lhs = max(
                        float(np.max(np.abs(A @ pt.x))) if p else 0.0,
                        float(np.max(np.abs(G @ pt.x + pt.s))) if m else 0.0,
                    )
                    if lhs / -cx <= self.tol:
                        status, message = SolveStatus.UNBOUNDED, "dual infeasibility certificate found"
                        break

            if iteration == self.max_iter:
                break

            nt = cone.scaling(pt.s, pt.z)
            W2 = cone.w_squared(nt)
            move: tuple[float, float, _Point] | None = None
            for reg, refine in ladder:
                try:
                    kkt = _KKTSystem(A, G, W2, reg, refine)
                except RuntimeError as err:
                    message = f"KKT factorization failed: {err}"
                    continue
                candidate = self._newton_step(kkt, scaled, nt, pt, (r1, ry, r3, r4), mu)
                if math.isfinite(candidate[0]) and candidate[0] >= MIN_STEP:
                    move = candidate
                    if reg > self.regularization:
                        logger.debug(f"ipm it {iteration:3d}: step recovered with regularization {reg:.0e}")
                    break
                message = f"step length collapsed to {candidate[0]:.1e}"
            if move is None:
                stalled = True
                break
            step, sigma, direction = move
            pt = pt.moved(step, direction)

        assert best is not None
        if status is SolveStatus.OPTIMAL:
            return self._report(system, full, status, residuals, iteration, trace, message)
        if status is SolveStatus.NUMERICAL_FAILURE and stalled and best[0] <= self.relaxed_tol:
            logger.warning(
                f"ipm stalled ({message}); best iterate accepted at residual {best[0]:.2e} "
                f"(relaxed tolerance {self.relaxed_tol:.0e})"
            )
            message = f"{message}; best iterate accepted at residual {best[0]:.2e}"
            return self._report(system, best[1], SolveStatus.OPTIMAL_INACCURATE, best[2], iteration, trace, message)
        if status is SolveStatus.NUMERICAL_FAILURE:
            logger.warning(f"ipm did not converge: {message} (best residual {best[0]:.2e})")
        return self._report(system, best[1], status, best[2], iteration, trace, message)

    @staticmethod
    def _newton_step(
        kkt: _KKTSystem,
        scaled: ConicProblem,
        nt: NTScaling,
        pt: _Point,
        res: tuple[np.ndarray, np.ndarray, np.ndarray, float],
        mu: float,
    ) -> tuple[float, float, _Point]:
        """Mehrotra predictor-corrector direction and its step length.

        Returns:
            Tuple of (step, centering parameter, direction).
        """
        b, h, c = scaled.b, scaled.h, scaled.c
        cone: ProductCone = scaled.cone
        r1, ry, r3, r4 = res
        lam = nt.lam
        x1, y1, z1 = kkt.solve(-c, b, h)
        denom_base = float(c @ x1 + b @ y1 + h @ z1)

        def direction(eta: float, d_s: np.ndarray, d_k: float) -> _Point:
            w_term = cone.apply_w(nt, cone.inverse_product(lam, d_s))
            x2, y2, z2 = kkt.solve(-eta * r1, -eta * ry, -eta * r3 - w_term)
            d_tau = (-eta * r4 - d_k / pt.tau - float(c @ x2 + b @ y2 + h @ z2)) / (denom_base - pt.kappa / pt.tau)
            dz = z2 + d_tau * z1
            return _Point(
                x=x2 + d_tau * x1,
                y=y2 + d_tau * y1,
                z=dz,
                s=w_term - kkt.W2 @ dz,
                tau=d_tau,
                kappa=(d_k - pt.kappa * d_tau) / pt.tau,
            )

        def max_step(d: _Point) -> float:
            alpha = min(cone.max_step(pt.s, d.s), cone.max_step(pt.z, d.z))
            if d.tau < 0:
                alpha = min(alpha, -pt.tau / d.tau)
            if d.kappa < 0:
                alpha = min(alpha, -pt.kappa / d.kappa)
            return alpha

        lam_sq = cone.product(lam, lam)
        affine = direction(1.0, -lam_sq, -pt.tau * pt.kappa)
        alpha_aff = min(1.0, max_step(affine))
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff) ** 3))

        correction = cone.product(cone.apply_w_inv(nt, affine.s), cone.apply_w(nt, affine.z))
        d_s = -lam_sq - correction + sigma * mu * cone.identity()
        d_k = -pt.tau * pt.kappa - affine.tau * affine.kappa + sigma * mu
        combined = direction(1.0 - sigma, d_s, d_k)
        return min(1.0, STEP_FACTOR * max_step(combined)), sigma, combined

    def _failure(self, system: ConstraintSystem, problem: ConicProblem, message: str) -> SolveReport:
        logger.warning(f"ipm: {message}")
        return self._report_without_iterations(system, problem, SolveStatus.NUMERICAL_FAILURE, message)


def solve_lp(
    system: ConstraintSystem, tol: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER
) -> SolveReport:
    """Solve a cone-free system with the embedded interior-point method.

    Raises:
        UnsupportedProblemError: The system carries cones.
    """
    if system.is_conic:
        raise UnsupportedProblemError("solve_lp received a system with cone constraints; use solve_socp")
    return InteriorPointSolver(tol=tol, max_iter=max_iter).solve(system)


def solve_socp(
    system: ConstraintSystem, tol: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER
) -> SolveReport:
    """Solve a system with standard and rotated second-order cones."""
    return InteriorPointSolver(tol=tol, max_iter=max_iter).solve(system)
