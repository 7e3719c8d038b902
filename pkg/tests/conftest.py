"""Shared fixtures: small hand-written feeders and toy market instances."""

import os
from pathlib import Path

import numpy as np
import pytest

from flexclear.models.bids import BaseProfile, FlexBid
from flexclear.models.market import MarketInstance
from flexclear.models.network import UPPER_GRID, Branch, Bus, RadialNetwork
from flexclear.parsers.matpower import MatpowerParser, RawCase, parse_case
from flexclear.processing.bid_generator import generate_bids, synthesize_base_supply
from flexclear.processing.topology import build_radial

FIXTURES = Path(__file__).parent / "fixtures"
DATA_DIR = Path(__file__).parent.parent / "data"


def case_file(name: str) -> Path | None:
    """Full Matpower test system from FLEXCLEAR_CASE_DIR or data/, if present."""
    for directory in (os.environ.get("FLEXCLEAR_CASE_DIR"), DATA_DIR):
        if directory and (Path(directory) / name).exists():
            return Path(directory) / name
    return None


def two_bus_network(s_max: float = 8.0, r: float = 0.01, x: float = 0.01, base_mva: float = 10.0) -> RadialNetwork:
    """Root bus 1 feeding bus 2 over one line."""
    return RadialNetwork(
        buses=(Bus(1), Bus(2)),
        branches={
            1: Branch(UPPER_GRID, 1, 0.0, 0.0, 1000.0, interface=True),
            2: Branch(1, 2, r, x, s_max),
        },
        root=1,
        ancestor={1: UPPER_GRID, 2: 1},
        children={1: (2,), 2: ()},
        base_mva=base_mva,
        name="toy",
    )


def two_bus_instance(
    load: float = 10.0,
    s_max: float = 8.0,
    bids: tuple[FlexBid, ...] | None = None,
    r: float = 0.01,
    x: float = 0.01,
) -> MarketInstance:
    """10 MW at bus 2 behind an 8 MVA line with one demand-up bid (5 MW at 40 EUR/MWh)."""
    if bids is None:
        bids = (FlexBid(bus=2, qty_d_up=5.0, cost_d_up=40.0),)
    profile = BaseProfile(p_gen={1: 0.0, 2: 0.0}, p_load={1: 0.0, 2: load}, q_load={1: 0.0, 2: 0.0})
    return MarketInstance(
        net=two_bus_network(s_max=s_max, r=r, x=x),
        profile=profile,
        bids=bids,
        v_band=(0.9, 1.1),
        label="toy",
    )


def synthetic_feeder_text(n_buses: int, seed: int, r_range: tuple[float, float] = (0.0003, 0.0012)) -> str:
    """Matpower source of a seeded radial feeder on a 10 MVA base.

    A trunk of about a third of the buses hangs off bus 1. The remaining buses
    form laterals of two to six buses attached to random trunk buses. Loads
    lie in [0.03, 0.1] MW with Q/P in [0.2, 0.4], and every branch has x
    between half and all of r.
    """
    rng = np.random.default_rng(seed)
    trunk = max(3, n_buses // 3)
    parent = {b: b - 1 for b in range(2, trunk + 1)}
    bus = trunk
    while bus < n_buses:
        attach = int(rng.integers(2, trunk + 1))
        for _ in range(min(int(rng.integers(2, 7)), n_buses - bus)):
            bus += 1
            parent[bus] = attach
            attach = bus

    bus_rows = ["\t1\t3\t0\t0\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;"]
    for b in range(2, n_buses + 1):
        pd = rng.uniform(0.03, 0.1)
        qd = pd * rng.uniform(0.2, 0.4)
        bus_rows.append(f"\t{b}\t1\t{pd:.5f}\t{qd:.5f}\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;")
    branch_rows = []
    for b in range(2, n_buses + 1):
        r = rng.uniform(*r_range)
        x = r * rng.uniform(0.5, 1.0)
        branch_rows.append(f"\t{parent[b]}\t{b}\t{r:.6f}\t{x:.6f}\t0\t0\t0\t0\t0\t0\t1\t-360\t360;")
    return "\n".join(
        [
            f"function mpc = synthetic{n_buses}",
            "mpc.version = '2';",
            "mpc.baseMVA = 10;",
            "mpc.bus = [",
            *bus_rows,
            "];",
            "mpc.gen = [",
            "\t1\t0\t0\t10\t-10\t1\t10\t1\t10\t0;",
            "];",
            "mpc.branch = [",
            *branch_rows,
            "];",
            "",
        ]
    )


def synthetic_feeder(n_buses: int, seed: int = 0, r_range: tuple[float, float] = (0.0003, 0.0012)) -> RadialNetwork:
    """Radial network of ``synthetic_feeder_text`` with 20 MVA default ratings."""
    raw = parse_case(synthetic_feeder_text(n_buses, seed, r_range))
    return build_radial(raw, default_rating_mva=20.0)


def subtree(net: RadialNetwork, bus: int) -> list[int]:
    """``bus`` and every bus below it."""
    out, stack = [], [bus]
    while stack:
        b = stack.pop()
        out.append(b)
        stack.extend(net.children[b])
    return out


def congested_instance(
    net: RadialNetwork,
    seed: int,
    spread: str = "SL2",
    v_band: tuple[float, float] = (0.9, 1.1),
    polygon_sides: int = 36,
    congested: tuple[int, ...] = (2, 3),
) -> MarketInstance:
    """Market on ``net`` with the lines into ``congested`` rated below their base flow.

    Each rating admits the base reactive flow together with the base real
    flow less half of the upward SL1 volume offered below the line, so both
    SL1 and SL2 bid sets can relieve it.
    """
    profile = synthesize_base_supply(net, seed)
    sl1 = {b.bus: b for b in generate_bids(profile, "SL1", net, seed)}
    caps = {}
    for head in congested:
        below = subtree(net, head)
        p0 = sum(profile.net_load(b) for b in below)
        q0 = sum(profile.q_load[b] for b in below)
        upward = sum(sl1[b].qty_p_up + sl1[b].qty_d_up for b in below if b in sl1)
        assert upward > 0, f"no SL1 volume below bus {head}"
        caps[head] = float(np.hypot(p0 - 0.5 * upward, q0))
    rated = net.with_capacities(caps)
    return MarketInstance(
        net=rated,
        profile=profile,
        bids=tuple(generate_bids(profile, spread, rated, seed)),
        v_band=v_band,
        polygon_sides=polygon_sides,
        label=f"{net.name}-{spread.lower()}-{seed}",
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def feeder8_raw() -> RawCase:
    return MatpowerParser().parse(FIXTURES / "feeder8.m")


@pytest.fixture
def feeder8(feeder8_raw: RawCase) -> RadialNetwork:
    return build_radial(feeder8_raw)
