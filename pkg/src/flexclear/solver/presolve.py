"""Presolve, conic standard form and Ruiz equilibration.

The interior-point method works on::

    minimize c'x  subject to  A x = b,  G x + s = h,  s in K

where K is an orthant (linear rows and finite bounds) followed by
second-order cones. This module builds that form from a ConstraintSystem,
removes fixed variables and empty rows first, and maps a solution of the
reduced problem back onto the full system.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from flexclear.models.system import ConeKind, ConstraintSystem
from flexclear.solver.base import SolveStatus
from flexclear.solver.cones import ProductCone, rotation, to_standard
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

FIXED_TOL = 1e-12
EMPTY_ROW_TOL = 1e-9
RUIZ_MAX_PASSES = 25
RUIZ_TOL = 1e-2


@dataclass
class ConicProblem:
    """Reduced problem in solver standard form, with the maps back.

    Attributes:
        c, A, b, G, h: Problem data over the kept columns.
        cone: Product cone of the ``G`` rows.
        keep_cols: Original indices of the kept columns.
        x_fixed: Full-length vector holding the value of every fixed column.
        eq_rows: Original equality rows kept, in A order.
        ineq_rows: Original ``G x <= h`` rows kept, first block of G.
        lower_cols, upper_cols: Kept columns with a finite bound row, second block.
        cone_ids: Original cone index of each kept cone, last block.
        status: Outcome decided during presolve (infeasible or unbounded), if any.
    """

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cone: ProductCone
    keep_cols: np.ndarray
    x_fixed: np.ndarray
    eq_rows: np.ndarray
    ineq_rows: np.ndarray
    lower_cols: np.ndarray
    upper_cols: np.ndarray
    cone_ids: list[int]
    status: SolveStatus | None = None
    message: str = ""

    @property
    def n(self) -> int:
        return len(self.c)


@dataclass
class Equilibration:
    """Diagonal scalings: ``x = col * x~``, ``y = eq_row * y~ / cost``, ``z = ineq_row * z~ / cost``."""

    col: np.ndarray
    eq_row: np.ndarray
    ineq_row: np.ndarray
    cost: float = 1.0
    passes: int = 0
    history: list[float] = field(default_factory=list)


def _infeasible(system: ConstraintSystem, message: str, status: SolveStatus = SolveStatus.INFEASIBLE) -> ConicProblem:
    n = system.n_vars
    return ConicProblem(
        c=np.zeros(0),
        A=sp.csr_matrix((0, 0)),
        b=np.zeros(0),
        G=sp.csr_matrix((0, 0)),
        h=np.zeros(0),
        cone=ProductCone(0, []),
        keep_cols=np.zeros(0, dtype=int),
        x_fixed=np.zeros(n),
        eq_rows=np.zeros(0, dtype=int),
        ineq_rows=np.zeros(0, dtype=int),
        lower_cols=np.zeros(0, dtype=int),
        upper_cols=np.zeros(0, dtype=int),
        cone_ids=[],
        status=status,
        message=message,
    )


def presolve(system: ConstraintSystem) -> ConicProblem:
    """Eliminate fixed variables and empty rows, then build the conic form.

    Args:
        system: Constraint system.

    Returns:
        ConicProblem; its ``status`` is set when presolve already proves the
        system infeasible or unbounded.
    """
    n = system.n_vars
    lb, ub, c = system.lb, system.ub, system.c
    crossed = np.flatnonzero(lb > ub + FIXED_TOL * np.maximum(1.0, np.abs(lb)))
    if crossed.size:
        return _infeasible(system, f"lower bound exceeds upper bound for {crossed.size} variable(s)")

    used = np.zeros(n, dtype=bool)
    for matrix in (system.A_eq, system.G, *(k.G for k in system.cones)):
        used[np.unique(matrix.tocoo().col)] = True

    x_fixed = np.zeros(n)
    fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= FIXED_TOL * np.maximum(1.0, np.abs(lb)))
    x_fixed[fixed] = lb[fixed]
    for j in np.flatnonzero(~used & ~fixed):
        if c[j] > 0:
            if not np.isfinite(lb[j]):
                return _infeasible(system, f"objective unbounded along variable {j}", SolveStatus.UNBOUNDED)
            x_fixed[j] = lb[j]
        elif c[j] < 0:
            if not np.isfinite(ub[j]):
                return _infeasible(system, f"objective unbounded along variable {j}", SolveStatus.UNBOUNDED)
            x_fixed[j] = ub[j]
        else:
            x_fixed[j] = min(max(0.0, lb[j]), ub[j])
        fixed[j] = True

    keep = np.flatnonzero(~fixed)
    fixed_idx = np.flatnonzero(fixed)
    x_known = x_fixed[fixed_idx]

    A_full = system.A_eq.tocsc()
    A = A_full[:, keep].tocsr()
    b = system.b_eq - A_full[:, fixed_idx] @ x_known
    nnz_a = np.diff(A.indptr)
    empty_eq = nnz_a == 0
    bad = empty_eq & (np.abs(b) > EMPTY_ROW_TOL * (1.0 + np.abs(system.b_eq)))
    if np.any(bad):
        return _infeasible(system, f"{int(bad.sum())} equality row(s) contradict fixed variables")
    eq_rows = np.flatnonzero(~empty_eq)
    A, b = A[eq_rows], b[eq_rows]

    G_full = system.G.tocsc()
    G_lin = G_full[:, keep].tocsr()
    h_lin = system.h - G_full[:, fixed_idx] @ x_known
    nnz_g = np.diff(G_lin.indptr)
    empty_ineq = nnz_g == 0
    bad = empty_ineq & (h_lin < -EMPTY_ROW_TOL * (1.0 + np.abs(system.h)))
    if np.any(bad):
        return _infeasible(system, f"{int(bad.sum())} inequality row(s) violated by fixed variables")
    ineq_rows = np.flatnonzero(~empty_ineq)
    G_lin, h_lin = G_lin[ineq_rows], h_lin[ineq_rows]

    lb_k, ub_k = lb[keep], ub[keep]
    lower_cols = np.flatnonzero(np.isfinite(lb_k))
    upper_cols = np.flatnonzero(np.isfinite(ub_k))
    nk = len(keep)
    n_lo, n_up = len(lower_cols), len(upper_cols)
    G_lower = sp.csr_matrix((-np.ones(n_lo), (np.arange(n_lo), lower_cols)), shape=(n_lo, nk))
    G_upper = sp.csr_matrix((np.ones(n_up), (np.arange(n_up), upper_cols)), shape=(n_up, nk))

    cone_blocks: list[sp.csr_matrix] = []
    cone_rhs: list[np.ndarray] = []
    cone_ids: list[int] = []
    soc_dims: list[int] = []
    for k, cone in enumerate(system.cones):
        Gs, hs = to_standard(cone)
        Gs = Gs.tocsc()
        hk = hs - Gs[:, fixed_idx] @ x_known
        Gk = Gs[:, keep].tocsr()
        if Gk.nnz == 0:
            if hk[0] < np.linalg.norm(hk[1:]) - EMPTY_ROW_TOL * (1.0 + np.abs(hs).max()):
                return _infeasible(system, f"cone {cone.tag} violated by fixed variables")
            continue
        cone_blocks.append(Gk)
        cone_rhs.append(hk)
        cone_ids.append(k)
        soc_dims.append(cone.dim)

    G = sp.vstack([G_lin, G_lower, G_upper, *cone_blocks], format="csr")
    h = np.concatenate([h_lin, -lb_k[lower_cols], ub_k[upper_cols], *cone_rhs])
    n_orthant = len(ineq_rows) + len(lower_cols) + len(upper_cols)

    removed = n - nk
    if removed or len(eq_rows) < system.n_eq or len(ineq_rows) < system.n_ineq:
        logger.debug(
            f"Presolve removed {removed} fixed column(s), {system.n_eq - len(eq_rows)} equality row(s), "
            f"{system.n_ineq - len(ineq_rows)} inequality row(s), {len(system.cones) - len(cone_ids)} cone(s)"
        )
    return ConicProblem(
        c=c[keep].astype(float),
        A=A,
        b=b,
        G=G,
        h=h,
        cone=ProductCone(n_orthant, soc_dims),
        keep_cols=keep,
        x_fixed=x_fixed,
        eq_rows=eq_rows,
        ineq_rows=ineq_rows,
        lower_cols=lower_cols,
        upper_cols=upper_cols,
        cone_ids=cone_ids,
    )


def equilibrate(problem: ConicProblem) -> tuple[ConicProblem, Equilibration]:
    """Ruiz equilibration of ``[A; G]`` plus objective scaling.

    Rows of one second-order cone share a single factor so the scaled slack
    stays in the same cone.

    Args:
        problem: Reduced conic problem.

    Returns:
        Tuple of (scaled problem, scaling factors).
    """
    n = problem.n
    p, m = problem.A.shape[0], problem.G.shape[0]
    col = np.ones(n)
    eq_row = np.ones(p)
    ineq_row = np.ones(m)
    A = problem.A.tocsr(copy=True)
    G = problem.G.tocsr(copy=True)
    cone = problem.cone
    scaling = Equilibration(col=col, eq_row=eq_row, ineq_row=ineq_row)

    for _ in range(RUIZ_MAX_PASSES):
        col_norm = np.zeros(n)
        if A.nnz:
            col_norm = np.maximum(col_norm, abs(A).max(axis=0).toarray().ravel())
        if G.nnz:
            col_norm = np.maximum(col_norm, abs(G).max(axis=0).toarray().ravel())
        row_a = abs(A).max(axis=1).toarray().ravel() if p else np.zeros(0)
        row_g = abs(G).max(axis=1).toarray().ravel() if m else np.zeros(0)
        for sl in cone.slices:
            row_g[sl] = row_g[sl].max()

        norms = np.concatenate([col_norm, row_a, row_g])
        norms = norms[norms > 0]
        spread = float(np.max(np.abs(1.0 - norms))) if norms.size else 0.0
        scaling.history.append(spread)
        if spread <= RUIZ_TOL:
            break

        dc = 1.0 / np.sqrt(np.where(col_norm > 0, col_norm, 1.0))
        da = 1.0 / np.sqrt(np.where(row_a > 0, row_a, 1.0))
        dg = 1.0 / np.sqrt(np.where(row_g > 0, row_g, 1.0))
        A = sp.diags(da) @ A @ sp.diags(dc) if p else A
        G = sp.diags(dg) @ G @ sp.diags(dc) if m else G
        col *= dc
        eq_row *= da
        ineq_row *= dg
        scaling.passes += 1

    c = col * problem.c
    c_norm = float(np.max(np.abs(c))) if n else 0.0
    scaling.cost = 1.0 / c_norm if c_norm > 0 else 1.0
    scaled = ConicProblem(
        c=scaling.cost * c,
        A=sp.csr_matrix(A),
        b=eq_row * problem.b,
        G=sp.csr_matrix(G),
        h=ineq_row * problem.h,
        cone=cone,
        keep_cols=problem.keep_cols,
        x_fixed=problem.x_fixed,
        eq_rows=problem.eq_rows,
        ineq_rows=problem.ineq_rows,
        lower_cols=problem.lower_cols,
        upper_cols=problem.upper_cols,
        cone_ids=problem.cone_ids,
    )
    return scaled, scaling


@dataclass
class FullSolution:
    """Primal point and sensitivity-signed duals on the original system."""

    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    lower_duals: np.ndarray
    upper_duals: np.ndarray
    cone_duals: list[np.ndarray]


def postsolve(
    system: ConstraintSystem, problem: ConicProblem, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> FullSolution:
    """Map a reduced solution back onto the original system.

    ``x, y, z`` solve the unscaled reduced problem with the convention
    ``A'y + G'z + c = 0``. Equality duals are returned as ``-y``, the
    sensitivity of the objective to ``b_eq``. Duals of fixed columns come from
    their reduced costs.

    Args:
        system: Original constraint system.
        problem: Reduced problem the solution belongs to.
        x, y, z: Reduced primal, equality and conic duals.

    Returns:
        FullSolution aligned with the original rows, columns and cones.
    """
    n = system.n_vars
    x_full = problem.x_fixed.copy()
    x_full[problem.keep_cols] = x

    eq_duals = np.zeros(system.n_eq)
    eq_duals[problem.eq_rows] = -y

    k_lin = len(problem.ineq_rows)
    k_lo = len(problem.lower_cols)
    k_up = len(problem.upper_cols)
    ineq_duals = np.zeros(system.n_ineq)
    ineq_duals[problem.ineq_rows] = z[:k_lin]
    lower_duals = np.zeros(n)
    upper_duals = np.zeros(n)
    lower_duals[problem.keep_cols[problem.lower_cols]] = z[k_lin : k_lin + k_lo]
    upper_duals[problem.keep_cols[problem.upper_cols]] = z[k_lin + k_lo : k_lin + k_lo + k_up]

    cone_duals = [np.zeros(cone.dim) for cone in system.cones]
    for k, sl in zip(problem.cone_ids, problem.cone.slices, strict=True):
        zk = z[sl]
        if system.cones[k].kind is ConeKind.RSOC:
            zk = rotation(len(zk)).T @ zk
        cone_duals[k] = np.asarray(zk, dtype=float)

    fixed = np.ones(n, dtype=bool)
    fixed[problem.keep_cols] = False
    if np.any(fixed):
        reduced = system.c - system.A_eq.T @ eq_duals
        if system.n_ineq:
            reduced = reduced + system.G.T @ ineq_duals
        for cone, zk in zip(system.cones, cone_duals, strict=True):
            reduced = reduced + cone.G.T @ zk
        idx = np.flatnonzero(fixed)
        lower_duals[idx] = np.maximum(reduced[idx], 0.0)
        upper_duals[idx] = np.maximum(-reduced[idx], 0.0)

    return FullSolution(
        x=x_full,
        eq_duals=eq_duals,
        ineq_duals=ineq_duals,
        lower_duals=lower_duals,
        upper_duals=upper_duals,
        cone_duals=cone_duals,
    )
