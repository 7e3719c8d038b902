"""Case loading and market-instance assembly from a resolved run configuration."""

from pathlib import Path

from flexclear.config import ConfigError, MarketConfig, NetworkConfig
from flexclear.models.bids import FlexBid
from flexclear.models.market import MarketInstance
from flexclear.models.network import RadialNetwork
from flexclear.models.system import Formulation
from flexclear.parsers.bid_csv import BidCsvParser
from flexclear.parsers.matpower import MatpowerParser
from flexclear.processing.bid_generator import generate_bids, synthesize_base_supply
from flexclear.processing.topology import build_radial
from flexclear.utils.logging_config import LogContext, get_logger

logger = get_logger(__name__)


def load_network(cfg: NetworkConfig) -> RadialNetwork:
    """Parse the case file and orient it into a radial network.

    Raises:
        ConfigError: No case path, or a capacity override names an unknown bus.
        FileNotFoundError: The case file does not exist.
        ParseError: The case file is malformed.
        TopologyError: The case is not a single radial feeder.
    """
    if not cfg.case_path:
        raise ConfigError("no case file given (network.case_path or --case)")
    path = Path(cfg.case_path)
    with LogContext(logger, "case loading", case=path.name):
        raw = MatpowerParser().parse(path)
        known = {int(b) for b in raw.bus["bus_i"]}
        unknown = sorted(b for b in cfg.line_capacity if b not in known)
        if unknown:
            raise ConfigError(f"line_capacity names unknown bus(es): {unknown}")
        net = build_radial(
            raw,
            root_id=cfg.root,
            interface_capacity=cfg.interface_capacity,
            default_rating_mva=cfg.default_rating_mva,
            slack_voltage=cfg.slack_voltage,
            line_capacity=cfg.line_capacity,
        )
    if raw.conversions:
        logger.info(f"Applied unit conversions in {path.name}: {'; '.join(raw.conversions)}")
    return net


def load_bids(cfg: MarketConfig, net: RadialNetwork) -> list[FlexBid] | None:
    """Bids read from ``cfg.bids_csv``, or None when bids are generated."""
    if cfg.bids_csv is None:
        return None
    bids = BidCsvParser().parse(Path(cfg.bids_csv))
    unknown = [b.bus for b in bids if not net.has_bus(b.bus)]
    if unknown:
        raise ConfigError(f"bid file {cfg.bids_csv} names unknown bus(es): {unknown[:10]}")
    return bids


def build_instance(
    net: RadialNetwork,
    cfg: MarketConfig,
    formulation: Formulation = Formulation.LP,
    bids: list[FlexBid] | None = None,
) -> MarketInstance:
    """Synthesize the base profile and bids of one case.

    Args:
        net: Radial network.
        cfg: Market settings (spread, band, load scale, seed, overrides).
        formulation: Formulation of the returned instance.
        bids: Externally supplied bids replacing the generated ones.

    Returns:
        MarketInstance labelled with ``cfg.case_label``.
    """
    profile = synthesize_base_supply(net, cfg.seed, cfg.load_scale)
    if bids is None:
        bids = generate_bids(profile, cfg.spread, net, cfg.seed, sl1_buses=cfg.sl1_buses)
    else:
        logger.info(f"Using {len(bids)} bids from {cfg.bids_csv}")
    for bus, band in cfg.v_overrides.items():
        if not net.has_bus(bus):
            raise ConfigError(f"v_overrides names unknown bus {bus}")
        logger.debug(f"Voltage band at bus {bus} overridden to {band}")
    return MarketInstance(
        net=net,
        profile=profile,
        bids=tuple(bids),
        v_band=cfg.v_band,
        polygon_sides=cfg.polygon_sides,
        formulation=formulation,
        reactive_margin=cfg.reactive_margin,
        v_overrides=dict(cfg.v_overrides),
        label=cfg.case_label,
    )
