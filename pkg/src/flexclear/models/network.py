"""Radial distribution network data model."""

from collections.abc import Iterator
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Bus:
    """A network node.

    Attributes:
        id: Integer node label from the case file.
        base_load_p: Base real demand in MW.
        base_load_q: Base reactive demand in MVAr.
        shunt_g: Shunt conductance to ground in p.u. (consumes real power).
        shunt_b: Shunt susceptance term in p.u., positive when it consumes
            reactive power (the opposite sign of the Matpower Bs column).
        v_min: Lower voltage-magnitude bound in p.u.
        v_max: Upper voltage-magnitude bound in p.u.
        q_min: Lower reactive net-injection bound in p.u.
        q_max: Upper reactive net-injection bound in p.u.
    """

    id: int
    base_load_p: float = 0.0
    base_load_q: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1
    q_min: float = 0.0
    q_max: float = 0.0

    def __post_init__(self) -> None:
        if not self.v_min > 0:
            raise ValueError(f"Bus {self.id}: v_min must be positive, got {self.v_min}")
        if self.v_min > self.v_max:
            raise ValueError(f"Bus {self.id}: v_min {self.v_min} exceeds v_max {self.v_max}")
        if self.q_min > self.q_max:
            raise ValueError(f"Bus {self.id}: q_min {self.q_min} exceeds q_max {self.q_max}")


@dataclass(frozen=True)
class Branch:
    """A line oriented away from the root.

    Attributes:
        from_bus: Ancestor-side bus id (A(i)).
        to_bus: Descendant-side bus id (i). Branches are keyed by this id.
        r: Series resistance in p.u.
        x: Series reactance in p.u.
        s_max: Apparent-flow capacity in MVA.
        interface: True for the virtual branch between the upper grid and the root.
    """

    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float
    interface: bool = False

    def __post_init__(self) -> None:
        if self.r < 0 or self.x < 0:
            raise ValueError(f"Branch {self.from_bus}->{self.to_bus}: negative impedance ({self.r}, {self.x})")
        if not self.interface and self.r == 0 and self.x == 0:
            raise ValueError(f"Branch {self.from_bus}->{self.to_bus}: zero impedance on an internal line")
        if not self.s_max > 0:
            raise ValueError(f"Branch {self.from_bus}->{self.to_bus}: s_max must be positive, got {self.s_max}")


# Label used for the virtual upper-grid node A(root) in exports.
UPPER_GRID = -1


@dataclass(frozen=True)
class RadialNetwork:
    """Validated tree-shaped distribution network.

    Buses are stored in breadth-first order from the root, so every ancestor
    precedes its descendants. Each bus owns the branch that feeds it: internal
    buses own ``A(i) -> i`` and the root owns the virtual interface branch.

    Attributes:
        buses: Buses in breadth-first order (root first).
        branches: Branches keyed by receiving bus id, interface branch included.
        root: Root bus id (substation, n^o).
        ancestor: Map bus -> ancestor bus; the root maps to UPPER_GRID.
        children: Map bus -> tuple of child buses (K(i)).
        base_mva: System power base in MVA.
        slack_voltage: Fixed squared voltage of the upper-grid node in p.u.^2.
        name: Case label used in exports.
    """

    buses: tuple[Bus, ...]
    branches: dict[int, Branch]
    root: int
    ancestor: dict[int, int]
    children: dict[int, tuple[int, ...]]
    base_mva: float
    slack_voltage: float = 1.0
    name: str = "case"
    _index: dict[int, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self._index:
            object.__setattr__(self, "_index", {bus.id: k for k, bus in enumerate(self.buses)})

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> list[int]:
        return [bus.id for bus in self.buses]

    def index(self, bus_id: int) -> int:
        """Position of a bus in the breadth-first ordering."""
        return self._index[bus_id]

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._index[bus_id]]

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._index

    def internal_branches(self) -> Iterator[Branch]:
        """Branches between two real buses, in bus order."""
        for bus in self.buses:
            branch = self.branches[bus.id]
            if not branch.interface:
                yield branch

    def branch(self, to_bus: int) -> Branch:
        return self.branches[to_bus]

    def leaves(self) -> list[int]:
        """Buses without children (the root only when it is the sole bus)."""
        return [
            bus.id
            for bus in self.buses
            if not self.children[bus.id] and (bus.id != self.root or self.n_buses == 1)
        ]

    def to_pu(self, value: float) -> float:
        """Convert MW/MVAr/MVA to per-unit on the system base."""
        return value / self.base_mva

    def from_pu(self, value: float) -> float:
        """Convert per-unit power to MW/MVAr/MVA."""
        return value * self.base_mva

    @property
    def total_load_mw(self) -> float:
        return sum(bus.base_load_p for bus in self.buses)

    def with_capacities(self, overrides: dict[int, float]) -> "RadialNetwork":
        """Return a copy with the ratings of selected branches replaced.

        Args:
            overrides: Map receiving-bus id -> new s_max in MVA.

        Returns:
            New network sharing all other data.
        """
        branches = dict(self.branches)
        for to_bus, s_max in overrides.items():
            if to_bus not in branches:
                raise KeyError(f"No branch feeds bus {to_bus}")
            old = branches[to_bus]
            branches[to_bus] = Branch(old.from_bus, old.to_bus, old.r, old.x, float(s_max), old.interface)
        return RadialNetwork(
            buses=self.buses,
            branches=branches,
            root=self.root,
            ancestor=self.ancestor,
            children=self.children,
            base_mva=self.base_mva,
            slack_voltage=self.slack_voltage,
            name=self.name,
        )

    def summary(self) -> dict[str, object]:
        """JSON-ready description of buses, branches and topology."""
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "root": self.root,
            "slack_voltage": self.slack_voltage,
            "buses": [
                {
                    "id": b.id,
                    "base_load_p": b.base_load_p,
                    "base_load_q": b.base_load_q,
                    "shunt_g": b.shunt_g,
                    "shunt_b": b.shunt_b,
                    "v_min": b.v_min,
                    "v_max": b.v_max,
                    "q_min": b.q_min,
                    "q_max": b.q_max,
                }
                for b in self.buses
            ],
            "branches": [
                {
                    "from_bus": br.from_bus,
                    "to_bus": br.to_bus,
                    "r": br.r,
                    "x": br.x,
                    "s_max": br.s_max,
                    "interface": br.interface,
                }
                for br in (self.branches[b.id] for b in self.buses)
            ],
            "ancestor": {str(k): v for k, v in self.ancestor.items()},
            "children": {str(k): list(v) for k, v in self.children.items()},
        }
