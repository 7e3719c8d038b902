"""Deterministic LP-versus-SOCP comparisons."""

import math
from collections.abc import Sequence

import numpy as np
import pandas as pd

from flexclear.models.market import ClearingResult
from flexclear.models.report import RMSE_FIELDS, ComparisonReport
from flexclear.models.system import Formulation
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

# SOCP prices below these floors are skipped when locating the largest relative gap.
DLMP_FLOOR = 1e-9
DLMP_RELATIVE_FLOOR = 1e-4


class DimensionError(ValueError):
    """Vectors of different or zero length."""


class ComparisonError(Exception):
    """A comparison input did not clear optimally."""

    def __init__(self, message: str, diagnostics: dict[str, object]):
        self.diagnostics = diagnostics
        super().__init__(message)


def rmse(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Root-mean-squared componentwise difference.

    Raises:
        DimensionError: Lengths differ or are zero.
    """
    x = np.asarray(a, dtype=float).ravel()
    y = np.asarray(b, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"rmse needs equal lengths, got {x.size} and {y.size}")
    if x.size == 0:
        raise DimensionError("rmse needs at least one element")
    return math.sqrt(float(np.mean((x - y) ** 2)))


def _aligned(
    lp: dict[int, float], socp: dict[int, float], fill: float | None = None
) -> tuple[list[float], list[float]]:
    """Values on common keys, or on all keys with missing entries set to ``fill``."""
    if fill is None:
        keys = sorted(set(lp) & set(socp))
        return [lp[k] for k in keys], [socp[k] for k in keys]
    keys = sorted(set(lp) | set(socp))
    return [lp.get(k, fill) for k in keys], [socp.get(k, fill) for k in keys]


def max_dlmp_deviation(lp: ClearingResult, socp: ClearingResult) -> tuple[int | None, float]:
    """Bus and relative gap (%) of the largest ``|lp - socp| / |socp|`` DLMP difference.

    Buses whose SOCP price is below DLMP_FLOOR, or below DLMP_RELATIVE_FLOOR
    times the largest SOCP price, are skipped. The root of a feeder with a
    free interface prices at zero up to solver noise and is skipped this way.
    """
    common = sorted(set(lp.dlmp) & set(socp.dlmp))
    largest = max((abs(socp.dlmp[b]) for b in common), default=0.0)
    floor = max(DLMP_FLOOR, DLMP_RELATIVE_FLOOR * largest)
    best_bus: int | None = None
    best = 0.0
    for bus in common:
        ref = abs(socp.dlmp[bus])
        if ref < floor:
            continue
        dev = abs(lp.dlmp[bus] - socp.dlmp[bus]) / ref * 100.0
        if best_bus is None or dev > best:
            best_bus, best = bus, dev
    return best_bus, best


def compare_deterministic(
    lp: ClearingResult,
    socp: ClearingResult,
    reference: ComparisonReport | None = None,
    label: str | None = None,
) -> ComparisonReport:
    """Compare the LP and SOCP clearings of one instance.

    Args:
        lp: LP clearing.
        socp: SOCP clearing (the benchmark). Comparing a result with itself
            is allowed and gives zero RMSEs.
        reference: Report the RMSEs are normalized against (usually SL1).
        label: Case label; defaults to the LP result's label.

    Returns:
        ComparisonReport.

    Raises:
        ComparisonError: Either clearing has no solution.
    """
    for result in (lp, socp):
        if not result.solved:
            raise ComparisonError(
                f"{result.formulation.value} clearing of {result.label} is {result.report.status.value}",
                result.report.summary(),
            )
    if lp.formulation is not Formulation.LP and lp is not socp:
        logger.warning(f"compare_deterministic: first result of {lp.label} is {lp.formulation.value}, not lp")

    dlmp_lp, dlmp_socp = _aligned(lp.dlmp, socp.dlmp)
    volt_lp, volt_socp = _aligned(lp.voltages, socp.voltages)
    flow_lp, flow_socp = _aligned({b: f.s for b, f in lp.flows.items()}, {b: f.s for b, f in socp.flows.items()})
    rev_lp, rev_socp = _aligned(
        {b: lp.revenues.get(b, 0.0) for b in lp.dlmp}, {b: socp.revenues.get(b, 0.0) for b in socp.dlmp}, 0.0
    )
    report = ComparisonReport(
        case_label=label or lp.label,
        rmse={
            "dlmp": rmse(dlmp_lp, dlmp_socp),
            "voltage": rmse(volt_lp, volt_socp),
            "flow": rmse(flow_lp, flow_socp),
            "revenue": rmse(rev_lp, rev_socp),
        },
        max_dlmp_dev=max_dlmp_deviation(lp, socp),
        lp_objective=lp.objective,
        socp_objective=socp.objective,
        binding_lp=list(lp.binding_flows),
        binding_socp=list(socp.binding_flows),
    )
    if reference is not None:
        report.rmse_normalized = report.normalized_by(reference)
    logger.info(
        f"Compared {report.case_label}: "
        + ", ".join(f"{k} rmse {v:.3g}" for k, v in report.rmse.items())
        + f"; max DLMP deviation {report.max_dlmp_dev[1]:.2f}% at bus {report.max_dlmp_dev[0]}"
    )
    return report


def normalize_reports(reports: list[ComparisonReport], reference_label: str = "SL1") -> bool:
    """Normalize every report against the one labelled ``reference_label``.

    Returns:
        False, leaving the reports untouched, when fewer than two reports are
        given or the reference is missing.
    """
    reference = next((r for r in reports if r.case_label == reference_label), None)
    if reference is None or len(reports) < 2:
        return False
    for report in reports:
        report.rmse_normalized = report.normalized_by(reference)
    return True


def comparison_table(reports: list[ComparisonReport], raw_label: str | None = "SL2") -> pd.DataFrame:
    """RMSE table with one row per case.

    Normalized rows come first when the reports were normalized, followed by
    a ``<raw_label>-N`` row of raw RMSEs. Without normalization every row is raw.

    Args:
        reports: Comparison reports in display order.
        raw_label: Case whose raw RMSEs get their own row; the last case when
            the label is absent.

    Returns:
        DataFrame indexed by case label with columns DLMP, Voltage, Flow, Revenue.
    """
    columns = [name.capitalize() if name != "dlmp" else "DLMP" for name in RMSE_FIELDS]
    rows: dict[str, list[float]] = {}
    if reports and all(r.rmse_normalized is not None for r in reports):
        for r in reports:
            assert r.rmse_normalized is not None
            rows[r.case_label] = [r.rmse_normalized[name] for name in RMSE_FIELDS]
        raw = next((r for r in reports if r.case_label == raw_label), reports[-1])
        rows[f"{raw.case_label}-N"] = [raw.rmse[name] for name in RMSE_FIELDS]
    else:
        for r in reports:
            rows[r.case_label] = [r.rmse[name] for name in RMSE_FIELDS]
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=columns)
    frame.index.name = "case"
    return frame
