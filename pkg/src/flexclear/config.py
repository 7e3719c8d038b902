"""Run configuration: defaults, YAML recipes and command-line overrides."""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, cast

import yaml

from flexclear.models.bids import ScenarioConfig, SpreadLevel
from flexclear.models.system import Formulation
from flexclear.processing.topology import DEFAULT_RATING_MVA
from flexclear.solver import BACKENDS, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE
from flexclear.utils.logging_config import DEFAULT_LOG_FILE, get_logger

logger = get_logger(__name__)


class ConfigError(Exception):
    """Exception raised for configuration errors."""

    pass


def _number(
    data: dict[str, object],
    key: str,
    default: float,
    minimum: float | None = None,
    maximum: float | None = None,
    strict_minimum: bool = False,
) -> float:
    raw = data.get(key, default)
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise ConfigError(f"{key} must be a number, got {raw!r}")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    if minimum is not None and (value < minimum or (strict_minimum and value == minimum)):
        bound = ">" if strict_minimum else ">="
        raise ConfigError(f"{key} must be {bound} {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{key} must be <= {maximum}, got {value}")
    return value


def _integer(data: dict[str, object], key: str, default: int, minimum: int | None = None) -> int:
    raw = data.get(key, default)
    if isinstance(raw, bool):
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    try:
        value = int(cast(int | str, raw))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if isinstance(raw, float) and raw != value:
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    return value


def _optional_number(data: dict[str, object], key: str, minimum: float | None = None) -> float | None:
    if data.get(key) is None:
        return None
    return _number(data, key, 0.0, minimum=minimum)


def parse_band(value: object, key: str = "v_band") -> tuple[float, float]:
    """Voltage band from ``[lo, hi]`` or ``"lo:hi"``.

    Raises:
        ConfigError: Malformed band, non-positive lower bound or lo > hi.
    """
    parts: list[object]
    if isinstance(value, str):
        parts = list(value.split(":"))
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise ConfigError(f"{key} must be 'lo:hi' or a two-element list, got {value!r}")
    if len(parts) != 2:
        raise ConfigError(f"{key} must have exactly two values, got {value!r}")
    try:
        lo, hi = float(cast(float, parts[0])), float(cast(float, parts[1]))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} values must be numbers, got {value!r}") from None
    if not lo > 0:
        raise ConfigError(f"{key}: lower bound must be positive, got {lo}")
    if lo > hi:
        raise ConfigError(f"{key}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


def _bus_map(value: object, key: str) -> dict[int, float]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must map bus ids to values, got {type(value).__name__}")
    out = {}
    for bus, raw in value.items():
        try:
            out[int(bus)] = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: invalid entry {bus!r}: {raw!r}") from None
        if not out[int(bus)] > 0:
            raise ConfigError(f"{key}: value for bus {bus} must be positive, got {raw!r}")
    return out


def _bus_list(value: object, key: str) -> list[int] | None:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key} must be a list of bus ids, got {type(value).__name__}")
    try:
        return [int(b) for b in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must contain integer bus ids, got {value!r}") from None


def _section(data: dict[str, object], key: str) -> dict[str, object]:
    value = data.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be a mapping, got {type(value).__name__}")
    return cast(dict[str, object], value)


def parse_formulations(value: object) -> list[Formulation]:
    """Formulation list from ``"lp,socp"`` or a YAML list."""
    items = value.split(",") if isinstance(value, str) else value
    if not isinstance(items, (list, tuple)) or not items:
        raise ConfigError(f"formulations must be a non-empty list, got {value!r}")
    out: list[Formulation] = []
    for item in items:
        try:
            f = Formulation.parse(str(item))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if f not in out:
            out.append(f)
    return out


@dataclass
class NetworkConfig:
    """Case file and tree construction.

    Attributes:
        case_path: Matpower case file.
        root: Root bus id; the case's slack bus when None.
        slack_voltage: Squared upper-grid voltage (p.u.^2).
        default_rating_mva: Rating used where the case has none.
        interface_capacity: Interface branch rating (MVA); 10x total load when None.
        line_capacity: Rating overrides keyed by receiving bus (MVA).
    """

    case_path: str | None = None
    root: int | None = None
    slack_voltage: float = 1.0
    default_rating_mva: float = DEFAULT_RATING_MVA
    interface_capacity: float | None = None
    line_capacity: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "NetworkConfig":
        """Create from dictionary."""
        raw_case = data.get("case_path")
        root = data.get("root")
        return cls(
            case_path=str(raw_case) if raw_case is not None else None,
            root=_integer(data, "root", 0) if root is not None else None,
            slack_voltage=_number(data, "slack_voltage", 1.0, minimum=0.0, strict_minimum=True),
            default_rating_mva=_number(
                data, "default_rating_mva", DEFAULT_RATING_MVA, minimum=0.0, strict_minimum=True
            ),
            interface_capacity=_optional_number(data, "interface_capacity", minimum=0.0),
            line_capacity=_bus_map(data.get("line_capacity"), "line_capacity"),
        )


@dataclass
class MarketConfig:
    """Market instance settings.

    Attributes:
        spread: Spread level of generated bids.
        v_band: Voltage band (p.u.) at every bus.
        polygon_sides: Edge count of the LP flow polygon.
        load_scale: Multiplier on every base load.
        seed: Seed for base supply and bid generation.
        formulations: Formulations cleared by ``clear``.
        reactive_margin: Reactive band widening; reactive injections pinned when None.
        v_overrides: Per-bus voltage bands.
        sl1_buses: Explicit SL1 bus list replacing the depth rule.
        bids_csv: Bid file replacing generated bids.
        label: Case label; the spread level when None.
    """

    spread: SpreadLevel = SpreadLevel.SL2
    v_band: tuple[float, float] = (0.99, 1.01)
    polygon_sides: int = 12
    load_scale: float = 1.0
    seed: int = 0
    formulations: list[Formulation] = field(default_factory=lambda: [Formulation.LP, Formulation.SOCP])
    reactive_margin: float | None = None
    v_overrides: dict[int, tuple[float, float]] = field(default_factory=dict)
    sl1_buses: list[int] | None = None
    bids_csv: str | None = None
    label: str | None = None

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "MarketConfig":
        """Create from dictionary."""
        try:
            spread = SpreadLevel.parse(str(data.get("spread", "SL2")))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        sides = _integer(data, "polygon_sides", 12, minimum=4)
        if sides % 2:
            raise ConfigError(f"polygon_sides must be even, got {sides}")
        raw_overrides = data.get("v_overrides") or {}
        if not isinstance(raw_overrides, dict):
            raise ConfigError("v_overrides must map bus ids to bands")
        overrides = {int(b): parse_band(band, f"v_overrides[{b}]") for b, band in raw_overrides.items()}
        raw_bids = data.get("bids_csv")
        raw_label = data.get("label")
        return cls(
            spread=spread,
            v_band=parse_band(data.get("v_band", [0.99, 1.01])),
            polygon_sides=sides,
            load_scale=_number(data, "load_scale", 1.0, minimum=0.0, strict_minimum=True),
            seed=_integer(data, "seed", 0, minimum=0),
            formulations=parse_formulations(data.get("formulations", ["lp", "socp"])),
            reactive_margin=_optional_number(data, "reactive_margin", minimum=0.0),
            v_overrides=overrides,
            sl1_buses=_bus_list(data.get("sl1_buses"), "sl1_buses"),
            bids_csv=str(raw_bids) if raw_bids is not None else None,
            label=str(raw_label) if raw_label is not None else None,
        )

    @property
    def case_label(self) -> str:
        return self.label or self.spread.value


@dataclass
class SolverConfig:
    """Solver backend settings."""

    backend: str = "ipm"
    tol: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "SolverConfig":
        """Create from dictionary."""
        backend = str(data.get("backend", "ipm")).lower()
        if backend not in BACKENDS:
            raise ConfigError(f"solver.backend must be one of {', '.join(BACKENDS)}, got {backend!r}")
        return cls(
            backend=backend,
            tol=_number(data, "tol", DEFAULT_TOLERANCE, minimum=0.0, maximum=1e-4, strict_minimum=True),
            max_iter=_integer(data, "max_iter", DEFAULT_MAX_ITER, minimum=1),
        )


@dataclass
class MonteCarloConfig:
    """Monte Carlo settings.

    Attributes:
        samples: Sample count.
        sigma_cost: Spread of the cost scale factors.
        sigma_qty: Spread of the quantity scale factors.
        workers: Worker processes.
        checkpoint: Samples between convergence-trace checkpoints.
        drift_window: Trailing fraction of samples the drift is measured over.
        drift_threshold: Drift counted as converged.
    """

    samples: int = 1000
    sigma_cost: float = 0.15
    sigma_qty: float = 0.3
    workers: int = 1
    checkpoint: int = 50
    drift_window: float = 0.2
    drift_threshold: float = 0.01

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "MonteCarloConfig":
        """Create from dictionary."""
        return cls(
            samples=_integer(data, "samples", 1000, minimum=1),
            sigma_cost=_number(data, "sigma_cost", 0.15, minimum=0.0),
            sigma_qty=_number(data, "sigma_qty", 0.3, minimum=0.0),
            workers=_integer(data, "workers", 1, minimum=1),
            checkpoint=_integer(data, "checkpoint", 50, minimum=1),
            drift_window=_number(data, "drift_window", 0.2, minimum=0.0, maximum=1.0, strict_minimum=True),
            drift_threshold=_number(data, "drift_threshold", 0.01, minimum=0.0, strict_minimum=True),
        )

    def scenario(self, seed: int) -> ScenarioConfig:
        return ScenarioConfig(sigma_cost=self.sigma_cost, sigma_qty=self.sigma_qty, seed=seed, samples=self.samples)


OUTPUT_FORMATS = ("csv", "json")


@dataclass
class OutputConfig:
    """Configuration for output generation.

    Attributes:
        directory: Directory every output file is written to.
        formats: Subset of csv and json.
        trace: Also write per-iterate solver traces.
        dump_system: Also write the constraint-system JSON dump.
    """

    directory: str = "results"
    formats: list[str] = field(default_factory=lambda: list(OUTPUT_FORMATS))
    trace: bool = False
    dump_system: bool = False

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "OutputConfig":
        """Create from dictionary."""
        raw_formats = data.get("formats", list(OUTPUT_FORMATS))
        formats = raw_formats.split(",") if isinstance(raw_formats, str) else raw_formats
        if not isinstance(formats, (list, tuple)):
            raise ConfigError(f"output.formats must be a list, got {raw_formats!r}")
        formats = [str(f).strip().lower() for f in formats]
        unknown = [f for f in formats if f not in OUTPUT_FORMATS]
        if unknown:
            raise ConfigError(f"unknown output format(s) {unknown}, expected csv and/or json")
        return cls(
            directory=str(data.get("directory", "results")),
            formats=formats,
            trace=bool(data.get("trace", False)),
            dump_system=bool(data.get("dump_system", False)),
        )


@dataclass
class LoggingConfig:
    """Configuration for logging.

    Attributes:
        level: Log level used when no -v flag is given.
        file: Path to log file; empty disables file logging.
    """

    level: str = "WARNING"
    file: str = DEFAULT_LOG_FILE

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "LoggingConfig":
        """Create from dictionary."""
        level = str(data.get("level", "WARNING")).upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"logging.level must be a standard level name, got {level!r}")
        return cls(level=level, file=str(data.get("file", DEFAULT_LOG_FILE)))


@dataclass
class CaseRecipe:
    """One row of a comparison run, overriding market settings.

    Attributes:
        label: Row label (SL1, SL2, SL2-s2, ...).
        spread: Spread level; the market default when None.
        v_band: Voltage band; the market default when None.
        load_scale: Load multiplier; the market default when None.
    """

    label: str
    spread: SpreadLevel | None = None
    v_band: tuple[float, float] | None = None
    load_scale: float | None = None

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "CaseRecipe":
        """Create from dictionary."""
        if "label" not in data:
            raise ConfigError("every compare case needs a label")
        spread = data.get("spread")
        try:
            parsed_spread = SpreadLevel.parse(str(spread)) if spread is not None else None
        except ValueError as e:
            raise ConfigError(str(e)) from None
        label = str(data["label"])
        band = data.get("v_band")
        return cls(
            label=label,
            spread=parsed_spread,
            v_band=parse_band(band, f"cases[{label}].v_band") if band is not None else None,
            load_scale=_optional_number(data, "load_scale", minimum=0.0),
        )

    def apply(self, market: MarketConfig) -> MarketConfig:
        """Market settings of this case."""
        return replace(
            market,
            label=self.label,
            spread=self.spread or market.spread,
            v_band=self.v_band or market.v_band,
            load_scale=self.load_scale if self.load_scale is not None else market.load_scale,
        )


@dataclass
class CompareConfig:
    """Comparison run: cases, normalization reference and raw row."""

    cases: list[CaseRecipe] = field(default_factory=list)
    reference: str = "SL1"
    raw: str = "SL2"

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "CompareConfig":
        """Create from dictionary."""
        raw_cases = data.get("cases", [])
        if not isinstance(raw_cases, list):
            raise ConfigError("compare.cases must be a list")
        cases = []
        for entry in raw_cases:
            if not isinstance(entry, dict):
                raise ConfigError(f"compare case must be a mapping, got {entry!r}")
            cases.append(CaseRecipe.from_dict(entry))
        labels = [c.label for c in cases]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"compare case labels must be unique, got {labels}")
        return cls(cases=cases, reference=str(data.get("reference", "SL1")), raw=str(data.get("raw", "SL2")))


@dataclass
class RunConfig:
    """Complete, resolved configuration of one run."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    market: MarketConfig = field(default_factory=MarketConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)

    SECTIONS = {
        "network": NetworkConfig,
        "market": MarketConfig,
        "solver": SolverConfig,
        "mc": MonteCarloConfig,
        "output": OutputConfig,
        "logging": LoggingConfig,
        "compare": CompareConfig,
    }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "RunConfig":
        """Create from a YAML document; unknown top-level keys are reported."""
        unknown = sorted(set(data) - set(cls.SECTIONS))
        if unknown:
            logger.warning(f"Ignoring unknown config section(s): {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, section_cls in cls.SECTIONS.items():
            if name in data:
                kwargs[name] = section_cls.from_dict(_section(data, name))  # type: ignore[attr-defined]
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        """Plain-data echo of the resolved configuration."""
        return {name: _plain(getattr(self, name)) for name in self.SECTIONS}


def _plain(value: object) -> Any:
    if isinstance(value, (SpreadLevel, Formulation)):
        return value.value
    if hasattr(value, "__dataclass_fields__"):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}  # type: ignore[arg-type]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def load_yaml_file(path: Path) -> dict[str, object]:
    """Load a YAML file.

    Args:
        path: Path to the YAML file.

    Returns:
        Parsed YAML content.

    Raises:
        FileNotFoundError: If file doesn't exist.
        ConfigError: If the file is not valid YAML or not a mapping.
    """
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, encoding="utf-8") as f:
        try:
            content = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from None

    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return cast(dict[str, object], content)


def load_run_config(path: Path | None = None) -> RunConfig:
    """Built-in defaults, updated by a YAML recipe when given.

    Raises:
        FileNotFoundError: The recipe does not exist.
        ConfigError: The recipe is invalid.
    """
    if path is None:
        return RunConfig()
    config = RunConfig.from_dict(load_yaml_file(path))
    logger.info(f"Loaded run configuration from {path}")
    return config
