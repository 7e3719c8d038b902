"""CSV exports of clearing results, comparison tables and Monte Carlo statistics."""

import re
from pathlib import Path
from typing import Any

import pandas as pd

from flexclear.models.market import ClearingResult, MarketInstance
from flexclear.models.report import ConvergenceTrace, MonteCarloStats
from flexclear.output.provenance import flatten
from flexclear.solver import SolveReport
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "%.10g"

PLOT_COLUMNS = ["case", "entity", "quantity", "formulation", "statistic", "value"]

# Characters that are unsafe for filenames across platforms (Windows, macOS, Linux)
_UNSAFE_FILENAME_PATTERN = re.compile(r'[<>:"/\\|?*\x00-\x1f]')


def _sanitize_filename(name: str) -> str:
    """Make a case label safe as a filename component."""
    safe = _UNSAFE_FILENAME_PATTERN.sub("_", name)
    safe = re.sub(r"\s+", "_", safe)
    safe = re.sub(r"_+", "_", safe).strip("_")
    return safe or "case"


def file_stem(label: str, *parts: str) -> str:
    """``<label>_<part>_...`` with the label sanitized."""
    return "_".join([_sanitize_filename(label), *parts])


class CSVExporter:
    """Writes tabular outputs with a ``# key: value`` provenance header.

    Every file starts with the flattened provenance record, one comment line
    per key, followed by the table. Floats use a fixed format so reruns are
    byte-identical.
    """

    def __init__(self, directory: Path, provenance: dict[str, Any]):
        """Initialize CSV exporter.

        Args:
            directory: Output directory (created on first write).
            provenance: Record from ``build_provenance``.
        """
        self.directory = directory
        self.provenance = provenance

    def write_frame(self, name: str, frame: pd.DataFrame, index: bool = False) -> Path:
        """Write one table; ``name`` is the file name without extension."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{name}.csv"
        header = "".join(f"# {key}: {value}\n" for key, value in flatten(self.provenance))
        body = frame.to_csv(index=index, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
        path.write_text(header + body, encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    def export_clearing(self, result: ClearingResult, inst: MarketInstance) -> list[Path]:
        """Per-bus and per-branch tables of one clearing."""
        stem = file_stem(result.label, result.formulation.value)
        net = inst.net
        bus_rows = []
        for bus in net.buses:
            act = result.activations.get(bus.id)
            bus_rows.append(
                {
                    "bus": bus.id,
                    "ancestor": net.ancestor[bus.id],
                    "dlmp": result.dlmp.get(bus.id, 0.0),
                    "voltage": result.voltages[bus.id],
                    "reactive": result.reactive[bus.id],
                    "net_load": inst.profile.net_load(bus.id),
                    "p_up": act.p_up if act else 0.0,
                    "p_dn": act.p_dn if act else 0.0,
                    "d_up": act.d_up if act else 0.0,
                    "d_dn": act.d_dn if act else 0.0,
                    "revenue": result.revenues.get(bus.id, 0.0),
                    "voltage_binding": result.binding_voltages.get(bus.id, ""),
                }
            )
        branch_rows = []
        binding = set(result.binding_flows)
        for bus in net.buses:
            flow = result.flows[bus.id]
            branch = net.branch(bus.id)
            branch_rows.append(
                {
                    "to_bus": bus.id,
                    "from_bus": branch.from_bus,
                    "interface": branch.interface,
                    "p": flow.p,
                    "q": flow.q,
                    "s": flow.s,
                    "s_max": flow.s_max,
                    "loading": flow.loading,
                    "current_sq": result.currents_sq.get(bus.id, float("nan")),
                    "binding": bus.id in binding,
                }
            )
        paths = [
            self.write_frame(f"{stem}_buses", pd.DataFrame(bus_rows)),
            self.write_frame(f"{stem}_branches", pd.DataFrame(branch_rows)),
        ]
        logger.info(f"Exported {result.label} ({result.formulation.value}) tables to {self.directory}")
        return paths

    def export_iterate_trace(self, report: SolveReport, label: str, formulation: str) -> Path:
        """Per-iterate convergence records of one solve."""
        frame = pd.DataFrame(
            [
                {
                    "iteration": r.iteration,
                    "primal_residual": r.primal_residual,
                    "dual_residual": r.dual_residual,
                    "gap": r.gap,
                    "mu": r.mu,
                    "step": r.step,
                    "sigma": r.sigma,
                }
                for r in report.trace
            ],
            columns=["iteration", "primal_residual", "dual_residual", "gap", "mu", "step", "sigma"],
        )
        return self.write_frame(file_stem(label, formulation, "trace"), frame)

    def export_comparison(self, table: pd.DataFrame, name: str = "comparison") -> Path:
        """RMSE table indexed by case."""
        return self.write_frame(name, table, index=True)

    def export_moments(self, stats: MonteCarloStats) -> list[Path]:
        """Per-entity mean, std, CV and CV flag for both sampled quantities."""
        paths = []
        for quantity in stats.values:
            frame = stats.moments(quantity) if stats.samples else _empty_moments()
            paths.append(self.write_frame(f"mc_{stats.formulation.value}_{quantity}_moments", frame))
        return paths

    def export_convergence(self, trace: ConvergenceTrace) -> Path:
        return self.write_frame(f"mc_{trace.formulation.value}_{trace.quantity}_convergence", trace.to_frame())

    def export_plot_data(self, rows: list[dict[str, object]], name: str) -> Path:
        """Long-format plot data (case, entity, quantity, formulation, statistic, value)."""
        return self.write_frame(name, pd.DataFrame(rows, columns=PLOT_COLUMNS))


def _empty_moments() -> pd.DataFrame:
    return pd.DataFrame(columns=["entity", "mean", "std", "cv", "cv_flag"])


def deterministic_plot_rows(lp: ClearingResult, socp: ClearingResult) -> list[dict[str, object]]:
    """LP and SOCP DLMP and apparent-flow series of one case, in long format."""
    rows: list[dict[str, object]] = []
    for result in (lp, socp):
        f = result.formulation.value
        for bus, price in result.dlmp.items():
            rows.append(_point(result.label, bus, "dlmp", f, price))
        for bus, flow in result.flows.items():
            rows.append(_point(result.label, bus, "flow", f, flow.s))
    return rows


def monte_carlo_plot_rows(label: str, stats: list[MonteCarloStats]) -> list[dict[str, object]]:
    """Mean and CV per entity, quantity and formulation, in long format."""
    rows: list[dict[str, object]] = []
    for s in stats:
        if not s.samples:
            continue
        for quantity in s.values:
            moments = s.moments(quantity)
            for record in moments.itertuples(index=False):
                for statistic in ("mean", "cv"):
                    value = float(getattr(record, statistic))
                    rows.append(_point(label, int(record.entity), quantity, s.formulation.value, value, statistic))
    return rows


def _point(
    case: str, entity: int, quantity: str, formulation: str, value: float, statistic: str = "value"
) -> dict[str, object]:
    return {
        "case": case,
        "entity": entity,
        "quantity": quantity,
        "formulation": formulation,
        "statistic": statistic,
        "value": value,
    }
