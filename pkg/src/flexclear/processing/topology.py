"""Radial network construction from parsed case tables."""

import networkx as nx

from flexclear.models.network import UPPER_GRID, Branch, Bus, RadialNetwork
from flexclear.parsers.matpower import RawCase
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

DEFAULT_RATING_MVA = 10.0
INTERFACE_LOAD_MULTIPLE = 10.0


class TopologyError(Exception):
    """The case does not describe a single radial feeder."""


class NotRadialError(TopologyError):
    """The branch graph contains a loop."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        path = " -> ".join(str(b) for b in [*cycle, cycle[0]]) if cycle else ""
        super().__init__(f"network is not radial, cycle: {path}")


class ConnectivityError(TopologyError):
    """Some buses cannot be reached from the root."""

    def __init__(self, buses: list[int]):
        self.buses = buses
        shown = ", ".join(str(b) for b in buses[:20])
        more = f" (+{len(buses) - 20} more)" if len(buses) > 20 else ""
        super().__init__(f"{len(buses)} bus(es) not connected to the root: {shown}{more}")


def build_radial(
    raw: RawCase,
    root_id: int | None = None,
    interface_capacity: float | None = None,
    default_rating_mva: float = DEFAULT_RATING_MVA,
    slack_voltage: float = 1.0,
    line_capacity: dict[int, float] | None = None,
) -> RadialNetwork:
    """Build an oriented radial network from case tables.

    Branches are oriented away from the root. Loads stay in MW/MVAr, shunts
    are converted to p.u. on the case base. The reactive injection band of
    every bus is pinned at its negated base reactive load. A zero-impedance
    interface branch is attached above the root.

    Args:
        raw: Parsed case.
        root_id: Substation bus. Defaults to the case's reference bus, then
            to the first bus in the table.
        interface_capacity: Interface rating in MVA. Defaults to ten times
            the total base load.
        default_rating_mva: Rating used for branches whose rateA is not positive.
        slack_voltage: Squared voltage of the upper-grid node in p.u.^2.
        line_capacity: Rating overrides in MVA keyed by receiving bus.

    Returns:
        Validated RadialNetwork.

    Raises:
        TopologyError: Unknown root, unknown branch endpoint or zero-impedance line.
        NotRadialError: The in-service branches contain a loop.
        ConnectivityError: Some bus is unreachable from the root.
    """
    if len(raw.bus) == 0:
        raise TopologyError("case has no buses")
    base_mva = raw.base_mva
    bus_ids = [int(b) for b in raw.bus["bus_i"]]
    known = set(bus_ids)

    if root_id is None:
        root_id = raw.slack_bus()
        if root_id is None:
            root_id = bus_ids[0]
            logger.warning(f"Case {raw.name} has no reference bus, using bus {root_id} as root")
    if root_id not in known:
        raise TopologyError(f"root bus {root_id} is not in the bus table")

    graph = nx.MultiGraph()
    graph.add_nodes_from(bus_ids)
    dropped = 0
    for row in raw.branch.itertuples(index=False):
        if row.status <= 0:
            dropped += 1
            continue
        f_bus, t_bus = int(row.fbus), int(row.tbus)
        for endpoint in (f_bus, t_bus):
            if endpoint not in known:
                raise TopologyError(f"branch {f_bus}-{t_bus} references unknown bus {endpoint}")
        graph.add_edge(f_bus, t_bus, r=float(row.r), x=float(row.x), rating=float(row.rateA))
    if dropped:
        logger.info(f"Case {raw.name}: ignored {dropped} out-of-service branch(es)")

    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        raise NotRadialError([int(edge[0]) for edge in cycle])

    reachable = nx.node_connected_component(graph, root_id)
    if len(reachable) != len(bus_ids):
        raise ConnectivityError(sorted(known - reachable))

    rows = {int(r.bus_i): r for r in raw.bus.itertuples(index=False)}
    order = [root_id]
    ancestor = {root_id: UPPER_GRID}
    children: dict[int, list[int]] = {b: [] for b in bus_ids}
    branches: dict[int, Branch] = {}
    overrides = line_capacity or {}
    unrated = 0

    for parent, child in nx.bfs_edges(graph, root_id):
        data = next(iter(graph.get_edge_data(parent, child).values()))
        rating = data["rating"]
        if child in overrides:
            rating = float(overrides[child])
        elif rating <= 0:
            rating = default_rating_mva
            unrated += 1
        try:
            branches[child] = Branch(parent, child, data["r"], data["x"], rating)
        except ValueError as e:
            raise TopologyError(str(e)) from e
        ancestor[child] = parent
        children[parent].append(child)
        order.append(child)

    if unrated:
        logger.warning(f"Case {raw.name}: {unrated} branch(es) without rating, using {default_rating_mva} MVA")

    buses = tuple(_make_bus(rows[b], base_mva) for b in order)
    total_load = sum(bus.base_load_p for bus in buses)
    if interface_capacity is None:
        interface_capacity = max(INTERFACE_LOAD_MULTIPLE * total_load, default_rating_mva)
    if root_id in overrides:
        interface_capacity = float(overrides[root_id])
    branches[root_id] = Branch(UPPER_GRID, root_id, 0.0, 0.0, interface_capacity, interface=True)

    net = RadialNetwork(
        buses=buses,
        branches=branches,
        root=root_id,
        ancestor=ancestor,
        children={b: tuple(c) for b, c in children.items()},
        base_mva=base_mva,
        slack_voltage=slack_voltage,
        name=raw.name,
    )
    logger.info(
        f"Built radial network {net.name}: {net.n_buses} buses, root {root_id}, "
        f"{len(net.leaves())} leaves, total load {total_load:.3f} MW"
    )
    return net


def _make_bus(row: object, base_mva: float) -> Bus:
    v_min = float(getattr(row, "Vmin"))
    v_max = float(getattr(row, "Vmax"))
    if not v_min > 0 or v_max < v_min:
        v_min, v_max = 0.9, 1.1
    q_fixed = -float(getattr(row, "Qd")) / base_mva
    return Bus(
        id=int(getattr(row, "bus_i")),
        base_load_p=float(getattr(row, "Pd")),
        base_load_q=float(getattr(row, "Qd")),
        shunt_g=float(getattr(row, "Gs")) / base_mva,
        shunt_b=-float(getattr(row, "Bs")) / base_mva,
        v_min=v_min,
        v_max=v_max,
        q_min=q_fixed,
        q_max=q_fixed,
    )


def depths(net: RadialNetwork) -> dict[int, int]:
    """Hop count from the root for every bus."""
    result = {net.root: 0}
    for bus in net.buses[1:]:
        result[bus.id] = result[net.ancestor[bus.id]] + 1
    return result


def leaf_depths(net: RadialNetwork) -> dict[int, int]:
    """Hop count from the root for every leaf bus.

    Args:
        net: Radial network.

    Returns:
        Map leaf bus id -> number of branches on its root path.
    """
    all_depths = depths(net)
    return {leaf: all_depths[leaf] for leaf in net.leaves()}
