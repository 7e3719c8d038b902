"""Market clearing: build, solve and translate solver output into market quantities."""

import math

import numpy as np

from flexclear.models.market import Activation, BranchFlow, ClearingResult, MarketInstance, PhysicsReport
from flexclear.models.network import UPPER_GRID
from flexclear.models.system import ConstraintSystem, Formulation
from flexclear.processing.formulation import FLOW_CONE, FLOW_POLYGON, P_BALANCE, build_system
from flexclear.solver import InteriorPointSolver, Solver, SolveReport
from flexclear.utils.logging_config import LogContext, get_logger

logger = get_logger(__name__)

BINDING_TOL = 1e-6
SANITY_TOL = 1e-6


class ClearingError(Exception):
    """The solver returned neither an optimal nor an acceptably accurate point."""

    def __init__(self, report: SolveReport, label: str = ""):
        self.report = report
        self.label = label
        where = f" for {label}" if label else ""
        super().__init__(
            f"Clearing failed{where}: solver {report.solver} returned {report.status.value} "
            f"after {report.iterations} iterations ({report.message})"
        )


class MarketConsistencyError(Exception):
    """An optimal clearing violates a hard physical bound."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("Inconsistent clearing result: " + "; ".join(violations[:5]))


def clear(inst: MarketInstance, solver: Solver | None = None) -> ClearingResult:
    """Clear one market instance.

    Args:
        inst: Market instance; its formulation selects LP or SOCP.
        solver: Backend; the embedded interior-point solver when None.

    Returns:
        ClearingResult with DLMPs in EUR/MWh and revenues settled.

    Raises:
        ClearingError: The solver found no solution (status neither optimal
            nor optimal_inaccurate).
        MarketConsistencyError: A branch flow exceeds its rating.
    """
    solver = solver or InteriorPointSolver()
    with LogContext(logger, "market clearing", label=inst.label, formulation=inst.formulation.value):
        system = build_system(inst)
        report = solver.solve(system)
    if not report.has_solution:
        raise ClearingError(report, inst.label)
    if not report.optimal:
        logger.warning(
            f"Clearing {inst.label} ({inst.formulation.value}) accepted at reduced accuracy: {report.message}"
        )

    result = _translate(inst, system, report)
    _check_sanity(inst, result)
    settle(result)
    logger.info(
        f"Cleared {inst.label} ({inst.formulation.value}): objective {result.objective:.4f} EUR, "
        f"{report.iterations} iterations, {len(result.binding_flows)} binding line(s), "
        f"{len(result.binding_voltages)} binding voltage bound(s)"
    )
    return result


def _translate(inst: MarketInstance, system: ConstraintSystem, report: SolveReport) -> ClearingResult:
    net = inst.net
    base = net.base_mva
    layout = system.layout
    assert layout is not None
    x = report.primal

    activations: dict[int, Activation] = {}
    for bid in inst.bids:
        b = bid.bus

        def volume(group: str, cap: float, bus: int = b) -> float:
            value = float(x[getattr(layout, group)[bus]]) * base
            return min(max(value, 0.0), cap)

        activations[b] = Activation(
            p_up=volume("dp_up", bid.qty_p_up),
            p_dn=volume("dp_dn", bid.qty_p_dn),
            d_up=volume("dd_up", bid.qty_d_up),
            d_dn=volume("dd_dn", bid.qty_d_dn),
        )

    dlmp = {bus: float(report.equality_duals[row]) / base for bus, row in system.rows_of(P_BALANCE).items()}

    flows: dict[int, BranchFlow] = {}
    voltages: dict[int, float] = {}
    reactive: dict[int, float] = {}
    currents_sq: dict[int, float] = {}
    for bus in net.buses:
        i = bus.id
        p = float(x[layout.P[i]]) * base
        q = float(x[layout.Q[i]]) * base
        flows[i] = BranchFlow(p=p, q=q, s=math.hypot(p, q), s_max=net.branch(i).s_max)
        voltages[i] = math.sqrt(max(float(x[layout.v[i]]), 0.0))
        reactive[i] = float(x[layout.q[i]]) * base
        if i in layout.l:
            currents_sq[i] = float(x[layout.l[i]])

    return ClearingResult(
        formulation=inst.formulation,
        activations=activations,
        dlmp=dlmp,
        flows=flows,
        voltages=voltages,
        currents_sq=currents_sq,
        reactive=reactive,
        objective=report.objective,
        report=report,
        binding_flows=_binding_flows(inst, system, report),
        binding_voltages=_binding_voltages(system, report),
        label=inst.label,
    )


def _binding_flows(inst: MarketInstance, system: ConstraintSystem, report: SolveReport) -> list[int]:
    net = inst.net
    x = report.primal
    binding: set[int] = set()
    if system.is_conic:
        for cone, z in zip(system.cones, report.cone_duals, strict=True):
            if cone.tag.family != FLOW_CONE:
                continue
            s_max = net.to_pu(net.branch(cone.tag.bus).s_max)
            u = cone.h - cone.G @ x
            slack = float(u[0] - np.linalg.norm(u[1:]))
            if float(z[0]) > BINDING_TOL or slack < BINDING_TOL * max(1.0, s_max):
                binding.add(cone.tag.bus)
    else:
        slack = system.h - system.G @ x
        for k, tag in enumerate(system.ineq_tags):
            if tag.family != FLOW_POLYGON:
                continue
            s_max = net.to_pu(net.branch(tag.bus).s_max)
            if report.inequality_duals[k] > BINDING_TOL or slack[k] < BINDING_TOL * max(1.0, s_max):
                binding.add(tag.bus)
    return [bus.id for bus in net.buses if bus.id in binding]


def _binding_voltages(system: ConstraintSystem, report: SolveReport) -> dict[int, str]:
    layout = system.layout
    assert layout is not None
    x = report.primal
    out: dict[int, str] = {}
    for bus, j in layout.v.items():
        if report.lower_bound_duals[j] > BINDING_TOL or x[j] - system.lb[j] < BINDING_TOL:
            out[bus] = "lower"
        elif report.upper_bound_duals[j] > BINDING_TOL or system.ub[j] - x[j] < BINDING_TOL:
            out[bus] = "upper"
    return out


def _check_sanity(inst: MarketInstance, result: ClearingResult) -> None:
    violations = [
        f"branch into bus {bus}: S = {flow.s:.6g} MVA exceeds rating {flow.s_max:.6g} MVA"
        for bus, flow in result.flows.items()
        if flow.s > flow.s_max * (1.0 + SANITY_TOL)
    ]
    if violations:
        raise MarketConsistencyError(violations)


def settle(result: ClearingResult) -> dict[int, float]:
    """Settle activations at the nodal price.

    Upward activations (more generation or less demand) are paid the DLMP;
    downward activations pay it back.

    Args:
        result: Cleared result; ``result.revenues`` is overwritten.

    Returns:
        Per bus revenue in EUR.
    """
    revenues = {
        bus: result.dlmp.get(bus, 0.0) * (act.upward - act.downward) for bus, act in result.activations.items()
    }
    result.revenues = revenues
    return revenues


def verify_physics(result: ClearingResult, inst: MarketInstance) -> PhysicsReport:
    """Recompute the network-equation residuals at a cleared point.

    LP results are checked against the linear balance and voltage rows and,
    additionally, against the SOCP real balance with the current implied by
    each branch flow, which isolates the loss and shunt terms the linear model
    drops. SOCP results report the gap of every current cone.

    Args:
        result: Cleared result.
        inst: Instance the result was cleared from.

    Returns:
        PhysicsReport with residuals in p.u.
    """
    net = inst.net
    base = net.base_mva
    conic = result.formulation is Formulation.SOCP

    P = {b: f.p / base for b, f in result.flows.items()}
    Q = {b: f.q / base for b, f in result.flows.items()}
    v = {b: vm**2 for b, vm in result.voltages.items()}
    q = {b: val / base for b, val in result.reactive.items()}
    l_sq = result.currents_sq

    def upstream_voltage(i: int) -> float:
        parent = net.ancestor[i]
        return net.slack_voltage if parent == UPPER_GRID else v[parent]

    p_res: list[float] = []
    q_res: list[float] = []
    v_res: list[float] = []
    cone_gaps: dict[int, float] = {}
    loss_residuals: dict[int, float] = {}
    socp_rows: dict[int, float] = {}
    for bus in net.buses:
        i = bus.id
        branch = net.branch(i)
        act = result.activations.get(i, Activation())
        injection = (act.upward - act.downward) / base
        p_row = injection + P[i] - sum(P[k] for k in net.children[i]) - inst.profile.net_load(i) / base
        q_row = q[i] + Q[i] - sum(Q[k] for k in net.children[i])
        v_row = v[i] - upstream_voltage(i) + 2.0 * (branch.r * P[i] + branch.x * Q[i])
        v_up = upstream_voltage(i)
        if conic:
            current = l_sq.get(i, 0.0)
            p_row -= branch.r * current + bus.shunt_g * v[i]
            q_row -= branch.x * current + bus.shunt_b * v[i]
            v_row -= (branch.r**2 + branch.x**2) * current
            if i in l_sq:
                cone_gaps[i] = current * v_up - (P[i] ** 2 + Q[i] ** 2)
        else:
            implied = (P[i] ** 2 + Q[i] ** 2) / v_up if v_up > 0 else 0.0
            dropped = branch.r * implied + bus.shunt_g * v[i]
            loss_residuals[i] = dropped
            socp_rows[i] = p_row - dropped
        p_res.append(abs(p_row))
        q_res.append(abs(q_row))
        v_res.append(abs(v_row))

    report = PhysicsReport(
        formulation=result.formulation,
        p_balance=max(p_res, default=0.0),
        q_balance=max(q_res, default=0.0),
        voltage=max(v_res, default=0.0),
        cone_gaps=cone_gaps,
        loss_residuals=loss_residuals,
        socp_balance_residuals=socp_rows,
    )
    logger.debug(
        f"Physics check {result.label} ({result.formulation.value}): p {report.p_balance:.2e}, "
        f"q {report.q_balance:.2e}, v {report.voltage:.2e}, min cone gap {report.min_cone_gap}"
    )
    return report
