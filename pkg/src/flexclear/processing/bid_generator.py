"""Base-supply synthesis, bid generation and Monte Carlo perturbation.

Every random draw comes from its own generator keyed by
``(seed, stream, field, bus[, sample])``. Adding or removing a bid at one bus
therefore never shifts the draws of another bus, and an SL1 bid set is exactly
the SL2 bid set filtered to the SL1 buses.
"""

import numpy as np

from flexclear.models.bids import COST_FIELDS, QUANTITY_FIELDS, BaseProfile, FlexBid, ScenarioConfig, SpreadLevel
from flexclear.models.network import RadialNetwork
from flexclear.processing.topology import leaf_depths
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

SUPPLY_RANGE = (0.10, 0.90)
DEMAND_COST_RANGE = (35.0, 45.0)
SUPPLY_COST_RANGE = (45.0, 55.0)
UPWARD_GEN_RATIO = 0.5
DOWNWARD_DEMAND_RATIO = 0.5

SL1_DEPTH_QUANTILE = 0.75
SL1_MIN_LEAVES = 5

_STREAM_SUPPLY = 0
_STREAM_COST = 1
_STREAM_PERTURB = 2
_FIELD_CODES = {name: k for k, name in enumerate((*QUANTITY_FIELDS, *COST_FIELDS))}

# Upper bound on resampling attempts for a non-negative factor.
_MAX_RESAMPLES = 1000


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def truncated_factor(rng: np.random.Generator, sigma: float) -> float:
    """Draw f ~ N(1, sigma) conditioned on f >= 0 by resampling.

    Raises:
        ValueError: sigma is negative or not finite.
    """
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError(f"perturbation spread must be finite and non-negative, got {sigma}")
    if sigma == 0:
        return 1.0
    for _ in range(_MAX_RESAMPLES):
        f = rng.normal(1.0, sigma)
        if f >= 0:
            return float(f)
    logger.warning(f"No non-negative factor in {_MAX_RESAMPLES} draws with sigma={sigma:g}, using 0")
    return 0.0


def synthesize_base_supply(net: RadialNetwork, seed: int, load_scale: float = 1.0) -> BaseProfile:
    """Place base supply at every bus that has base demand.

    Each loaded bus receives ``u * p_load`` with ``u ~ Uniform(0.10, 0.90)``
    drawn from that bus's own stream.

    Args:
        net: Radial network with base loads.
        seed: Generation seed.
        load_scale: Multiplier applied to all base loads before synthesis.

    Returns:
        BaseProfile in MW/MVAr.
    """
    if load_scale < 0:
        raise ValueError(f"load_scale must be non-negative, got {load_scale}")
    p_gen: dict[int, float] = {}
    p_load: dict[int, float] = {}
    q_load: dict[int, float] = {}
    negative = 0
    for bus in net.buses:
        p = bus.base_load_p * load_scale
        q = bus.base_load_q * load_scale
        if p < 0 or q < 0:
            negative += 1
        p, q = max(p, 0.0), max(q, 0.0)
        p_load[bus.id] = p
        q_load[bus.id] = q
        if p > 0:
            u = _rng(seed, _STREAM_SUPPLY, bus.id).uniform(*SUPPLY_RANGE)
            p_gen[bus.id] = float(u * p)
        else:
            p_gen[bus.id] = 0.0
    if negative:
        logger.warning(f"{negative} bus(es) with negative base load clipped to zero")
    profile = BaseProfile(p_gen=p_gen, p_load=p_load, q_load=q_load, load_scale=load_scale)
    logger.info(
        f"Base profile: load {profile.total_load:.3f} MW, supply {profile.total_gen:.3f} MW (scale {load_scale})"
    )
    return profile


def select_sl1_buses(
    net: RadialNetwork,
    profile: BaseProfile,
    explicit: list[int] | None = None,
    quantile: float = SL1_DEPTH_QUANTILE,
    min_leaves: int = SL1_MIN_LEAVES,
) -> list[int]:
    """Pick the end nodes of the long laterals.

    Leaves whose depth lies in the top quartile of leaf depths are taken,
    topped up to ``min_leaves`` by depth. Only buses with load or generation
    are kept.

    Args:
        net: Radial network.
        profile: Base profile used for the load/generation filter.
        explicit: Bus list overriding the depth rule.
        quantile: Depth quantile threshold.
        min_leaves: Minimum number of leaves before the filter.

    Returns:
        Selected bus ids in network order.
    """
    if explicit is not None:
        unknown = [b for b in explicit if not net.has_bus(b)]
        if unknown:
            raise ValueError(f"SL1 bus list contains unknown buses: {unknown}")
        chosen = set(explicit)
    else:
        depth = leaf_depths(net)
        ranked = sorted(depth, key=lambda b: (-depth[b], net.index(b)))
        threshold = float(np.quantile(list(depth.values()), quantile)) if depth else 0.0
        chosen = {b for b in ranked if depth[b] >= threshold}
        if len(chosen) < min_leaves:
            chosen.update(ranked[:min_leaves])
    selected = [b for b in net.bus_ids if b in chosen and profile.has_resources(b)]
    logger.debug(f"SL1 candidates {sorted(chosen)}, kept {selected}")
    return selected


def generate_bids(
    profile: BaseProfile,
    spread: SpreadLevel | str,
    net: RadialNetwork,
    seed: int,
    sl1_buses: list[int] | None = None,
) -> list[FlexBid]:
    """Generate four-sided bids for the eligible buses.

    Demand bids cover the full load downward and half of it upward; supply
    bids cover the full base supply downward and half of it upward. Demand
    costs are drawn from [35, 45] EUR/MWh and supply costs from [45, 55].

    Args:
        profile: Base profile.
        spread: SL1 or SL2.
        net: Radial network.
        seed: Generation seed.
        sl1_buses: Explicit SL1 bus list (SL1 only).

    Returns:
        Bids in network order.
    """
    spread = SpreadLevel.parse(spread)
    if spread is SpreadLevel.SL1:
        eligible = select_sl1_buses(net, profile, explicit=sl1_buses)
    else:
        eligible = [b for b in net.bus_ids if profile.has_resources(b)]

    bids = [_bid_for_bus(profile, bus, seed) for bus in eligible]
    if not bids:
        logger.warning(f"Spread level {spread.value} produced no bids")
    else:
        logger.info(f"Generated {len(bids)} {spread.value} bids")
    return bids


def _bid_for_bus(profile: BaseProfile, bus: int, seed: int) -> FlexBid:
    p_load = profile.p_load.get(bus, 0.0)
    p_gen = profile.p_gen.get(bus, 0.0)
    draws = {
        name: _rng(seed, _STREAM_COST, _FIELD_CODES[name], bus).uniform(*bounds)
        for name, bounds in (
            ("cost_p_up", SUPPLY_COST_RANGE),
            ("cost_p_dn", SUPPLY_COST_RANGE),
            ("cost_d_up", DEMAND_COST_RANGE),
            ("cost_d_dn", DEMAND_COST_RANGE),
        )
    }
    return FlexBid(
        bus=bus,
        qty_p_up=UPWARD_GEN_RATIO * p_gen,
        qty_p_dn=p_gen,
        qty_d_up=p_load,
        qty_d_dn=DOWNWARD_DEMAND_RATIO * p_load,
        cost_p_up=float(draws["cost_p_up"]),
        cost_p_dn=float(draws["cost_p_dn"]),
        cost_d_up=float(draws["cost_d_up"]),
        cost_d_dn=float(draws["cost_d_dn"]),
    )


def perturb_bids(bids: list[FlexBid], cfg: ScenarioConfig, sample: int) -> list[FlexBid]:
    """Scale every cost and quantity cap of every bid by a random factor.

    Cost factors follow N(1, sigma_cost), quantity factors N(1, sigma_qty),
    both truncated below at zero. Draws depend only on
    ``(cfg.seed, bus, field, sample)``.

    Args:
        bids: Bids to perturb.
        cfg: Perturbation settings.
        sample: Sample index.

    Returns:
        New list of perturbed bids in input order.
    """
    if sample < 0:
        raise ValueError(f"sample index must be non-negative, got {sample}")
    out = []
    for bid in bids:
        qty = tuple(
            truncated_factor(_rng(cfg.seed, _STREAM_PERTURB, _FIELD_CODES[name], bid.bus, sample), cfg.sigma_qty)
            for name in QUANTITY_FIELDS
        )
        cost = tuple(
            truncated_factor(_rng(cfg.seed, _STREAM_PERTURB, _FIELD_CODES[name], bid.bus, sample), cfg.sigma_cost)
            for name in COST_FIELDS
        )
        out.append(bid.scaled(qty, cost))
    return out
