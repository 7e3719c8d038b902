"""Constraint-system builders for the LP and SOCP market formulations.

Both formulations share the bid-activation variables, the objective, the
squared-voltage and reactive bounds and the bid caps. Powers are in p.u. on
the network base; objective coefficients are EUR per p.u. so the objective
comes out in EUR and balance-row duals in EUR per p.u.

The net injection ``p_i`` is substituted into the real-power balance, which
is written with the base net load ``d_i - p_i`` on its right-hand side.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from flexclear.models.market import MarketInstance
from flexclear.models.network import UPPER_GRID
from flexclear.models.system import ConeConstraint, ConeKind, ConstraintSystem, Formulation, RowTag, VariableLayout
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

DEFAULT_POLYGON_SIDES = 12

P_BALANCE = "p_balance"
Q_BALANCE = "q_balance"
VOLTAGE = "voltage"
FLOW_POLYGON = "flow_polygon"
FLOW_CONE = "flow_cone"
CURRENT_CONE = "current_cone"


class FormulationError(Exception):
    """A market instance cannot be turned into a constraint system."""


class InvalidParameterError(FormulationError):
    """A formulation parameter is out of range."""


class InstanceError(FormulationError):
    """The instance data is inconsistent with its network."""


@dataclass(frozen=True)
class PolygonEdge:
    """One edge ``alpha*P + beta*Q + delta*S_max <= 0`` of the flow polygon."""

    alpha: float
    beta: float
    delta: float


def polygon_edges(sides: int) -> list[PolygonEdge]:
    """Edges of the regular polygon inscribed in the unit circle.

    Vertices sit at angles ``2*pi*m/M``; edge ``m`` joins vertices ``m`` and
    ``m+1`` and has its outward normal at ``(2m+1)*pi/M``.

    Args:
        sides: Number of edges M (even, at least 4).

    Returns:
        M edges in counter-clockwise order.

    Raises:
        InvalidParameterError: M is odd or below 4.
    """
    if isinstance(sides, bool) or not isinstance(sides, (int, np.integer)):
        raise InvalidParameterError(f"polygon side count must be an integer, got {sides!r}")
    if sides < 4 or sides % 2:
        raise InvalidParameterError(f"polygon side count must be even and at least 4, got {sides}")
    delta = -math.cos(math.pi / sides)
    edges = []
    for m in range(sides):
        phi = (2 * m + 1) * math.pi / sides
        edges.append(PolygonEdge(alpha=math.cos(phi), beta=math.sin(phi), delta=delta))
    return edges


class _Rows:
    """Triplet accumulator for a block of sparse rows."""

    def __init__(self) -> None:
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.tags: list[RowTag] = []

    def add(self, terms: dict[int, float], rhs: float, tag: RowTag) -> int:
        row = len(self.rhs)
        for col, val in terms.items():
            if val != 0.0:
                self.rows.append(row)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)
        self.tags.append(tag)
        return row

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n_cols))


def _validate(inst: MarketInstance) -> None:
    polygon_edges(inst.polygon_sides)
    bands = [("v_band", inst.v_band)] + [(f"v_overrides[{b}]", band) for b, band in inst.v_overrides.items()]
    for name, (v_lo, v_hi) in bands:
        if not v_lo > 0:
            raise InvalidParameterError(f"{name}: lower voltage bound must be positive, got {v_lo}")
        if v_lo > v_hi:
            raise InvalidParameterError(f"{name}: lower voltage bound {v_lo} exceeds upper bound {v_hi}")
    if inst.reactive_margin is not None and inst.reactive_margin < 0:
        raise InvalidParameterError(f"reactive margin must be non-negative, got {inst.reactive_margin}")
    for bus in inst.v_overrides:
        if not inst.net.has_bus(bus):
            raise InstanceError(f"voltage override for unknown bus {bus}")
    seen: set[int] = set()
    for bid in inst.bids:
        if not inst.net.has_bus(bid.bus):
            raise InstanceError(f"bid at unknown bus {bid.bus}")
        if bid.bus in seen:
            raise InstanceError(f"more than one bid at bus {bid.bus}")
        seen.add(bid.bus)


def _reactive_bounds(inst: MarketInstance, bus_id: int) -> tuple[float, float]:
    """Reactive net-injection band of a bus in p.u."""
    bus = inst.net.bus(bus_id)
    scale = inst.profile.load_scale
    q_lo, q_hi = bus.q_min * scale, bus.q_max * scale
    if inst.reactive_margin is None:
        return q_lo, q_hi
    width = (1.0 + inst.reactive_margin) * max(abs(q_lo), abs(q_hi))
    return -width, width


def _build(inst: MarketInstance, formulation: Formulation) -> ConstraintSystem:
    _validate(inst)
    net = inst.net
    base = net.base_mva
    conic = formulation is Formulation.SOCP

    layout = VariableLayout()
    for bid in inst.bids:
        layout.add("dp_up", bid.bus)
        layout.add("dp_dn", bid.bus)
        layout.add("dd_up", bid.bus)
        layout.add("dd_dn", bid.bus)
    for bus in net.buses:
        layout.add("q", bus.id)
        layout.add("P", bus.id)
        layout.add("Q", bus.id)
        layout.add("v", bus.id)
        branch = net.branch(bus.id)
        if conic and (branch.r > 0 or branch.x > 0):
            layout.add("l", bus.id)
    n = layout.n_vars

    c = np.zeros(n)
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)

    for bid in inst.bids:
        for group, qty, cost, sign in (
            ("dp_up", bid.qty_p_up, bid.cost_p_up, 1.0),
            ("dp_dn", bid.qty_p_dn, bid.cost_p_dn, -1.0),
            ("dd_up", bid.qty_d_up, bid.cost_d_up, 1.0),
            ("dd_dn", bid.qty_d_dn, bid.cost_d_dn, -1.0),
        ):
            j = getattr(layout, group)[bid.bus]
            c[j] = sign * cost * base
            lb[j] = 0.0
            ub[j] = qty / base

    for bus in net.buses:
        v_lo, v_hi = inst.voltage_band(bus.id)
        j = layout.v[bus.id]
        lb[j], ub[j] = v_lo**2, v_hi**2
        j = layout.q[bus.id]
        lb[j], ub[j] = _reactive_bounds(inst, bus.id)
        if bus.id in layout.l:
            lb[layout.l[bus.id]] = 0.0

    eq = _Rows()
    for bus in net.buses:
        i = bus.id
        terms: dict[int, float] = {layout.P[i]: 1.0}
        for k in net.children[i]:
            terms[layout.P[k]] = -1.0
        if i in layout.dp_up:
            terms[layout.dp_up[i]] = 1.0
            terms[layout.dp_dn[i]] = -1.0
            terms[layout.dd_up[i]] = 1.0
            terms[layout.dd_dn[i]] = -1.0
        if conic:
            if i in layout.l:
                terms[layout.l[i]] = -net.branch(i).r
            terms[layout.v[i]] = terms.get(layout.v[i], 0.0) - bus.shunt_g
        eq.add(terms, inst.profile.net_load(i) / base, RowTag(P_BALANCE, i))

    for bus in net.buses:
        i = bus.id
        terms = {layout.q[i]: 1.0, layout.Q[i]: 1.0}
        for k in net.children[i]:
            terms[layout.Q[k]] = -1.0
        if conic:
            if i in layout.l:
                terms[layout.l[i]] = -net.branch(i).x
            terms[layout.v[i]] = -bus.shunt_b
        eq.add(terms, 0.0, RowTag(Q_BALANCE, i))

    for bus in net.buses:
        i = bus.id
        branch = net.branch(i)
        terms = {layout.v[i]: 1.0, layout.P[i]: 2.0 * branch.r, layout.Q[i]: 2.0 * branch.x}
        if conic and i in layout.l:
            terms[layout.l[i]] = -(branch.r**2 + branch.x**2)
        parent = net.ancestor[i]
        if parent == UPPER_GRID:
            rhs = net.slack_voltage
        else:
            terms[layout.v[parent]] = -1.0
            rhs = 0.0
        eq.add(terms, rhs, RowTag(VOLTAGE, i))

    ineq = _Rows()
    cones: list[ConeConstraint] = []
    if conic:
        for bus in net.buses:
            i = bus.id
            s_max = net.to_pu(net.branch(i).s_max)
            cones.append(
                _cone(ConeKind.SOC, [None, (layout.P[i], 1.0), (layout.Q[i], 1.0)], [s_max, 0.0, 0.0], n, FLOW_CONE, i)
            )
            if i in layout.l:
                parent = net.ancestor[i]
                if parent == UPPER_GRID:
                    entries = [(layout.l[i], 0.5), None, (layout.P[i], 1.0), (layout.Q[i], 1.0)]
                    h = [0.0, net.slack_voltage, 0.0, 0.0]
                else:
                    entries = [(layout.l[i], 0.5), (layout.v[parent], 1.0), (layout.P[i], 1.0), (layout.Q[i], 1.0)]
                    h = [0.0, 0.0, 0.0, 0.0]
                cones.append(_cone(ConeKind.RSOC, entries, h, n, CURRENT_CONE, i))
    else:
        edges = polygon_edges(inst.polygon_sides)
        for bus in net.buses:
            i = bus.id
            s_max = net.to_pu(net.branch(i).s_max)
            for m, edge in enumerate(edges):
                terms = {layout.P[i]: edge.alpha, layout.Q[i]: edge.beta}
                ineq.add(terms, -edge.delta * s_max, RowTag(FLOW_POLYGON, i, m))

    system = ConstraintSystem(
        c=c,
        A_eq=eq.matrix(n),
        b_eq=np.array(eq.rhs),
        G=ineq.matrix(n),
        h=np.array(ineq.rhs),
        lb=lb,
        ub=ub,
        cones=tuple(cones),
        eq_tags=tuple(eq.tags),
        ineq_tags=tuple(ineq.tags),
        layout=layout,
        formulation=formulation,
        base_mva=base,
    )
    logger.debug(
        f"Built {formulation.value} system: {system.n_vars} variables, {system.n_eq} equalities, "
        f"{system.n_ineq} inequalities, {len(system.cones)} cones"
    )
    return system


def _cone(
    kind: ConeKind, entries: list[tuple[int, float] | None], h: list[float], n: int, family: str, bus: int
) -> ConeConstraint:
    """Cone whose k-th entry is ``h_k + coef_k * x[col_k]`` (just ``h_k`` when the entry is None)."""
    rows = [k for k, e in enumerate(entries) if e is not None]
    columns = [e[0] for e in entries if e is not None]
    data = [-e[1] for e in entries if e is not None]
    G = sp.csr_matrix((data, (rows, columns)), shape=(len(entries), n))
    return ConeConstraint(kind, G, np.array(h, dtype=float), RowTag(family, bus))


def build_lp(inst: MarketInstance) -> ConstraintSystem:
    """Linear market: LinDistFlow balance and voltage rows, polygonal flow limits.

    Args:
        inst: Market instance.

    Returns:
        Constraint system without cones.

    Raises:
        InvalidParameterError: Bad polygon side count or voltage band.
        InstanceError: Bid or override at an unknown bus.
    """
    return _build(inst, Formulation.LP)


def build_socp(inst: MarketInstance) -> ConstraintSystem:
    """Relaxed branch-flow market with conic current and flow limits.

    Branches without impedance carry no current variable, since the current
    then enters no balance or voltage row.

    Args:
        inst: Market instance.

    Returns:
        Constraint system with one flow cone per branch and one rotated
        current cone per branch with impedance.

    Raises:
        InvalidParameterError: Bad polygon side count or voltage band.
        InstanceError: Bid or override at an unknown bus.
    """
    return _build(inst, Formulation.SOCP)


def build_system(inst: MarketInstance) -> ConstraintSystem:
    """Build the system for the instance's own formulation."""
    if inst.formulation is Formulation.SOCP:
        return build_socp(inst)
    return build_lp(inst)
