"""Market instances and clearing results."""

from dataclasses import dataclass, field, replace
from typing import Any

from flexclear.models.bids import BaseProfile, FlexBid
from flexclear.models.network import RadialNetwork
from flexclear.models.system import Formulation
from flexclear.solver.base import SolveReport


@dataclass(frozen=True)
class MarketInstance:
    """Everything needed to clear one flexibility market.

    Attributes:
        net: Radial network.
        profile: Base generation and demand.
        bids: Flexibility bids, at most one per bus.
        v_band: Voltage-magnitude band (p.u.) applied to every bus.
        polygon_sides: Edge count of the LP flow polygon.
        formulation: LP or SOCP.
        reactive_margin: When set, the reactive injection of every bus may
            float within +/-(1 + margin) times its base reactive load instead
            of being pinned at the negated base load.
        v_overrides: Per-bus voltage bands replacing ``v_band``.
        label: Case label carried into reports.
    """

    net: RadialNetwork
    profile: BaseProfile
    bids: tuple[FlexBid, ...]
    v_band: tuple[float, float] = (0.9, 1.1)
    polygon_sides: int = 12
    formulation: Formulation = Formulation.LP
    reactive_margin: float | None = None
    v_overrides: dict[int, tuple[float, float]] = field(default_factory=dict)
    label: str = "custom"

    def with_formulation(self, formulation: Formulation) -> "MarketInstance":
        return replace(self, formulation=formulation)

    def with_bids(self, bids: list[FlexBid] | tuple[FlexBid, ...]) -> "MarketInstance":
        return replace(self, bids=tuple(bids))

    def with_network(self, net: RadialNetwork) -> "MarketInstance":
        return replace(self, net=net)

    def with_v_band(self, v_band: tuple[float, float]) -> "MarketInstance":
        return replace(self, v_band=v_band)

    def voltage_band(self, bus: int) -> tuple[float, float]:
        return self.v_overrides.get(bus, self.v_band)


@dataclass(frozen=True)
class Activation:
    """Cleared volumes at one bid bus, in MW."""

    p_up: float = 0.0
    p_dn: float = 0.0
    d_up: float = 0.0
    d_dn: float = 0.0

    @property
    def upward(self) -> float:
        return self.p_up + self.d_up

    @property
    def downward(self) -> float:
        return self.p_dn + self.d_dn


@dataclass(frozen=True)
class BranchFlow:
    """Sending-end flow on the branch feeding a bus."""

    p: float
    q: float
    s: float
    s_max: float

    @property
    def loading(self) -> float:
        return self.s / self.s_max if self.s_max > 0 else 0.0


@dataclass
class ClearingResult:
    """Market outcome of one clearing.

    Flows and currents are keyed by the receiving bus of their branch, the
    root key standing for the interface branch.

    Attributes:
        formulation: LP or SOCP.
        activations: Per bid bus cleared volumes (MW).
        dlmp: Per bus price (EUR/MWh).
        flows: Per branch P (MW), Q (MVAr), S (MVA).
        voltages: Per bus magnitude (p.u.).
        currents_sq: Per branch squared current (p.u., SOCP only).
        reactive: Per bus reactive net injection (MVAr).
        objective: Total activation cost (EUR).
        revenues: Per bus settlement (EUR).
        binding_flows: Receiving buses of branches whose flow limit binds.
        binding_voltages: Buses at a voltage bound, with ``"lower"``/``"upper"``.
        report: Solver report behind the result.
        label: Case label.
    """

    formulation: Formulation
    activations: dict[int, Activation]
    dlmp: dict[int, float]
    flows: dict[int, BranchFlow]
    voltages: dict[int, float]
    currents_sq: dict[int, float]
    reactive: dict[int, float]
    objective: float
    report: SolveReport
    revenues: dict[int, float] = field(default_factory=dict)
    binding_flows: list[int] = field(default_factory=list)
    binding_voltages: dict[int, str] = field(default_factory=dict)
    label: str = "custom"

    @property
    def optimal(self) -> bool:
        return self.report.optimal

    @property
    def solved(self) -> bool:
        return self.report.has_solution

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "formulation": self.formulation.value,
            "objective": self.objective,
            "status": self.report.status.value,
            "iterations": self.report.iterations,
            "kkt_residuals": list(self.report.kkt_residuals),
            "activations": {
                str(b): {"p_up": a.p_up, "p_dn": a.p_dn, "d_up": a.d_up, "d_dn": a.d_dn}
                for b, a in self.activations.items()
            },
            "dlmp": {str(b): v for b, v in self.dlmp.items()},
            "voltages": {str(b): v for b, v in self.voltages.items()},
            "reactive": {str(b): v for b, v in self.reactive.items()},
            "flows": {str(b): {"p": f.p, "q": f.q, "s": f.s, "s_max": f.s_max} for b, f in self.flows.items()},
            "currents_sq": {str(b): v for b, v in self.currents_sq.items()},
            "revenues": {str(b): v for b, v in self.revenues.items()},
            "binding_flows": list(self.binding_flows),
            "binding_voltages": {str(b): side for b, side in self.binding_voltages.items()},
        }


@dataclass
class PhysicsReport:
    """Residuals of the network equations at a cleared point, in p.u.

    Attributes:
        formulation: Formulation the residuals are measured against.
        p_balance: Max-norm of the real-power balance residuals.
        q_balance: Max-norm of the reactive-power balance residuals.
        voltage: Max-norm of the voltage-drop residuals.
        cone_gaps: Per branch ``l * v_A - (P^2 + Q^2)`` (SOCP only).
        loss_residuals: Per branch ``r * (P^2 + Q^2) / v_A + g * v``, the real
            balance terms the linear model drops (LP only).
        socp_balance_residuals: Per bus residual of the SOCP real balance
            evaluated at an LP point with the current implied by its flows.
    """

    formulation: Formulation
    p_balance: float
    q_balance: float
    voltage: float
    cone_gaps: dict[int, float] = field(default_factory=dict)
    loss_residuals: dict[int, float] = field(default_factory=dict)
    socp_balance_residuals: dict[int, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.p_balance, self.q_balance, self.voltage)

    @property
    def min_cone_gap(self) -> float | None:
        return min(self.cone_gaps.values()) if self.cone_gaps else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "formulation": self.formulation.value,
            "p_balance": self.p_balance,
            "q_balance": self.q_balance,
            "voltage": self.voltage,
            "cone_gaps": {str(b): v for b, v in self.cone_gaps.items()},
            "loss_residuals": {str(b): v for b, v in self.loss_residuals.items()},
            "socp_balance_residuals": {str(b): v for b, v in self.socp_balance_residuals.items()},
        }
