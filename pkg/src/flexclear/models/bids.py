"""Base profiles and flexibility bids."""

from dataclasses import dataclass, fields, replace
from enum import Enum


class SpreadLevel(str, Enum):
    """How widely flexibility offers are spread over the feeder."""

    SL1 = "SL1"  # end nodes of the long laterals only
    SL2 = "SL2"  # every bus with load or generation

    @classmethod
    def parse(cls, value: "str | SpreadLevel") -> "SpreadLevel":
        if isinstance(value, SpreadLevel):
            return value
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise ValueError(f"Unknown spread level '{value}', expected SL1 or SL2") from None


@dataclass(frozen=True)
class BaseProfile:
    """Base generation and demand per bus, in MW and MVAr.

    Loads are stored after ``load_scale`` has been applied.
    """

    p_gen: dict[int, float]
    p_load: dict[int, float]
    q_load: dict[int, float]
    load_scale: float = 1.0

    def __post_init__(self) -> None:
        for name in ("p_gen", "p_load", "q_load"):
            negative = [b for b, v in getattr(self, name).items() if v < 0]
            if negative:
                raise ValueError(f"{name} must be non-negative, got negative values at buses {negative[:5]}")
        stray = [b for b, v in self.p_gen.items() if v > 0 and self.p_load.get(b, 0.0) <= 0]
        if stray:
            raise ValueError(f"Base supply placed at buses without demand: {stray[:5]}")

    def net_load(self, bus: int) -> float:
        """Base demand minus base supply at a bus (MW)."""
        return self.p_load.get(bus, 0.0) - self.p_gen.get(bus, 0.0)

    def has_resources(self, bus: int) -> bool:
        return self.p_load.get(bus, 0.0) > 0 or self.p_gen.get(bus, 0.0) > 0

    @property
    def total_load(self) -> float:
        return sum(self.p_load.values())

    @property
    def total_gen(self) -> float:
        return sum(self.p_gen.values())


QUANTITY_FIELDS = ("qty_p_up", "qty_p_dn", "qty_d_up", "qty_d_dn")
COST_FIELDS = ("cost_p_up", "cost_p_dn", "cost_d_up", "cost_d_dn")


@dataclass(frozen=True)
class FlexBid:
    """Four-sided flexibility offer at one bus.

    Quantities are caps in MW; costs are in EUR/MWh. ``p_up``/``p_dn`` raise or
    lower generation, ``d_up``/``d_dn`` lower or raise demand.
    """

    bus: int
    qty_p_up: float = 0.0
    qty_p_dn: float = 0.0
    qty_d_up: float = 0.0
    qty_d_dn: float = 0.0
    cost_p_up: float = 0.0
    cost_p_dn: float = 0.0
    cost_d_up: float = 0.0
    cost_d_dn: float = 0.0

    def __post_init__(self) -> None:
        for name in (*QUANTITY_FIELDS, *COST_FIELDS):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"Bid at bus {self.bus}: {name} must be non-negative, got {value}")

    @property
    def quantities(self) -> tuple[float, float, float, float]:
        return (self.qty_p_up, self.qty_p_dn, self.qty_d_up, self.qty_d_dn)

    @property
    def costs(self) -> tuple[float, float, float, float]:
        return (self.cost_p_up, self.cost_p_dn, self.cost_d_up, self.cost_d_dn)

    def scaled(self, qty_factors: tuple[float, ...], cost_factors: tuple[float, ...]) -> "FlexBid":
        """Copy with every quantity and cost multiplied by its factor."""
        changes: dict[str, float] = {}
        for name, f in zip(QUANTITY_FIELDS, qty_factors, strict=True):
            changes[name] = getattr(self, name) * f
        for name, f in zip(COST_FIELDS, cost_factors, strict=True):
            changes[name] = getattr(self, name) * f
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float | int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ScenarioConfig:
    """Monte Carlo perturbation settings.

    Attributes:
        sigma_cost: Standard deviation of the cost scale factor.
        sigma_qty: Standard deviation of the quantity scale factor.
        seed: Perturbation seed.
        samples: Number of samples.
    """

    sigma_cost: float = 0.15
    sigma_qty: float = 0.3
    seed: int = 0
    samples: int = 1000

    def __post_init__(self) -> None:
        if self.sigma_cost < 0 or self.sigma_qty < 0:
            raise ValueError(f"sigmas must be non-negative, got cost={self.sigma_cost} qty={self.sigma_qty}")
        if self.samples < 1:
            raise ValueError(f"samples must be at least 1, got {self.samples}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
