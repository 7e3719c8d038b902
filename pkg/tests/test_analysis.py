"""Tests for LP-versus-SOCP comparison."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexclear.models.market import BranchFlow, ClearingResult
from flexclear.models.report import ComparisonReport
from flexclear.models.system import Formulation
from flexclear.processing.analysis import (
    ComparisonError,
    DimensionError,
    compare_deterministic,
    comparison_table,
    max_dlmp_deviation,
    normalize_reports,
    rmse,
)
from flexclear.processing.market import clear
from flexclear.solver import SolveReport, SolveStatus
from tests.conftest import two_bus_instance


def make_result(
    formulation: Formulation,
    dlmp: dict[int, float],
    voltages: dict[int, float] | None = None,
    flows: dict[int, float] | None = None,
    revenues: dict[int, float] | None = None,
    status: SolveStatus = SolveStatus.OPTIMAL,
    label: str = "case",
) -> ClearingResult:
    report = SolveReport(
        status=status,
        primal=np.zeros(0),
        equality_duals=np.zeros(0),
        inequality_duals=np.zeros(0),
        lower_bound_duals=np.zeros(0),
        upper_bound_duals=np.zeros(0),
        cone_duals=[],
        objective=0.0,
        kkt_residuals=(0.0, 0.0, 0.0),
        iterations=7,
        solver="ipm",
    )
    return ClearingResult(
        formulation=formulation,
        activations={},
        dlmp=dlmp,
        flows={b: BranchFlow(p=s, q=0.0, s=s, s_max=10.0) for b, s in (flows or dict.fromkeys(dlmp, 1.0)).items()},
        voltages=voltages or dict.fromkeys(dlmp, 1.0),
        currents_sq={},
        reactive={},
        objective=0.0,
        report=report,
        revenues=revenues or {},
        label=label,
    )


def make_report(
    label: str, dlmp: float, voltage: float = 0.01, flow: float = 0.1, revenue: float = 1.0
) -> ComparisonReport:
    return ComparisonReport(
        case_label=label,
        rmse={"dlmp": dlmp, "voltage": voltage, "flow": flow, "revenue": revenue},
        max_dlmp_dev=(None, 0.0),
    )


vectors = st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=20)


class TestRmse:
    """Tests for rmse."""

    def test_known_value(self) -> None:
        assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == pytest.approx(math.sqrt(4.0 / 3.0))

    def test_dimension_mismatch(self) -> None:
        with pytest.raises(DimensionError, match="equal lengths"):
            rmse([1.0, 2.0], [1.0])

    def test_empty(self) -> None:
        with pytest.raises(DimensionError, match="at least one"):
            rmse([], [])

    @settings(max_examples=100, deadline=None)
    @given(data=st.data(), a=vectors)
    def test_metric_properties(self, data: st.DataObject, a: list[float]) -> None:
        """Test symmetry, zero distance to itself and the triangle inequality."""
        n = len(a)
        fixed = st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=n, max_size=n)
        b = data.draw(fixed)
        c = data.draw(fixed)
        assert rmse(a, a) == 0.0
        assert rmse(a, b) == pytest.approx(rmse(b, a))
        assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-9


class TestMaxDlmpDeviation:
    """Tests for the largest relative DLMP gap."""

    def test_largest_relative_gap(self) -> None:
        lp = make_result(Formulation.LP, {1: 0.0, 2: 40.0, 3: 44.0})
        socp = make_result(Formulation.SOCP, {1: 0.0, 2: 40.0, 3: 40.0})
        assert max_dlmp_deviation(lp, socp) == (3, pytest.approx(10.0))

    def test_zero_prices_skipped(self) -> None:
        lp = make_result(Formulation.LP, {1: 5.0})
        socp = make_result(Formulation.SOCP, {1: 0.0})
        assert max_dlmp_deviation(lp, socp) == (None, 0.0)

    def test_noise_level_root_price_skipped(self) -> None:
        """Test that a root priced at solver noise does not win on relative deviation."""
        lp = make_result(Formulation.LP, {1: -2e-7, 2: 40.0, 3: 41.0})
        socp = make_result(Formulation.SOCP, {1: 3e-8, 2: 40.5, 3: 40.0})
        assert max_dlmp_deviation(lp, socp) == (3, pytest.approx(2.5))

    def test_root_is_never_the_largest_deviation(self) -> None:
        """Test on the congested toy feeder that the zero-priced root is skipped under both formulations."""
        inst = two_bus_instance()
        lp = clear(inst)
        socp = clear(inst.with_formulation(Formulation.SOCP))
        assert socp.dlmp[1] == pytest.approx(0.0, abs=1e-3)
        assert max_dlmp_deviation(lp, socp)[0] == 2


class TestCompareDeterministic:
    """Tests for compare_deterministic."""

    def test_field_rmses(self) -> None:
        lp = make_result(
            Formulation.LP, {1: 0.0, 2: 40.0}, voltages={1: 1.0, 2: 0.97}, flows={1: 8.0, 2: 8.0}, revenues={2: 80.0}
        )
        socp = make_result(
            Formulation.SOCP,
            {1: 0.0, 2: 42.0},
            voltages={1: 1.0, 2: 0.95},
            flows={1: 8.0, 2: 8.0},
            revenues={2: 86.0},
        )
        report = compare_deterministic(lp, socp)
        assert report.case_label == "case"
        assert report.rmse["dlmp"] == pytest.approx(math.sqrt(2.0))
        assert report.rmse["voltage"] == pytest.approx(math.sqrt(0.0002))
        assert report.rmse["flow"] == pytest.approx(0.0)
        assert report.rmse["revenue"] == pytest.approx(math.sqrt(18.0))
        assert report.max_dlmp_dev[0] == 2
        assert report.rmse_normalized is None

    def test_missing_revenue_counts_as_zero(self) -> None:
        lp = make_result(Formulation.LP, {1: 10.0, 2: 10.0}, revenues={2: 4.0})
        socp = make_result(Formulation.SOCP, {1: 10.0, 2: 10.0})
        assert compare_deterministic(lp, socp).rmse["revenue"] == pytest.approx(math.sqrt(8.0))

    def test_self_comparison_is_zero(self) -> None:
        """Test that a cleared result compared with itself has zero RMSEs."""
        result = clear(two_bus_instance())
        report = compare_deterministic(result, result, label="self")
        assert report.case_label == "self"
        assert all(v == 0.0 for v in report.rmse.values())
        assert report.max_dlmp_dev[1] == 0.0

    def test_toy_market_prices_agree(self) -> None:
        """Test that the lossy and lossless toy markets price the congested bus alike."""
        inst = two_bus_instance()
        report = compare_deterministic(clear(inst), clear(inst.with_formulation(Formulation.SOCP)))
        assert report.rmse["dlmp"] < 0.05
        assert report.socp_objective > report.lp_objective
        assert report.binding_lp == [2]

    def test_reference_normalization(self) -> None:
        lp = make_result(Formulation.LP, {1: 0.0, 2: 44.0})
        socp = make_result(Formulation.SOCP, {1: 0.0, 2: 40.0})
        reference = make_report("SL1", dlmp=2.0, voltage=0.0, flow=0.0, revenue=0.0)
        report = compare_deterministic(lp, socp, reference=reference)
        assert report.rmse_normalized is not None
        assert report.rmse_normalized["dlmp"] == pytest.approx(math.sqrt(8.0) / 2.0)
        assert report.rmse_normalized["voltage"] == 1.0

    def test_failed_clearing(self) -> None:
        """Test that a non-optimal input raises with the solver summary attached."""
        lp = make_result(Formulation.LP, {1: 0.0}, status=SolveStatus.NUMERICAL_FAILURE, label="SL2")
        socp = make_result(Formulation.SOCP, {1: 0.0})
        with pytest.raises(ComparisonError, match="lp clearing of SL2 is numerical_failure") as exc_info:
            compare_deterministic(lp, socp)
        assert exc_info.value.diagnostics["iterations"] == 7


class TestComparisonTable:
    """Tests for normalization and the RMSE table."""

    def test_normalized_table(self) -> None:
        """Test normalized rows, the raw row of SL2 and the SL1 identity row."""
        reports = [make_report("SL1", 2.0), make_report("SL2", 6.0), make_report("SL2-s2", 3.0)]
        assert normalize_reports(reports)
        table = comparison_table(reports)
        assert list(table.columns) == ["DLMP", "Voltage", "Flow", "Revenue"]
        assert table.index.name == "case"
        assert list(table.index) == ["SL1", "SL2", "SL2-s2", "SL2-N"]
        assert table.loc["SL1"].tolist() == [1.0, 1.0, 1.0, 1.0]
        assert table.loc["SL2", "DLMP"] == pytest.approx(3.0)
        assert table.loc["SL2-s2", "DLMP"] == pytest.approx(1.5)
        assert table.loc["SL2-N", "DLMP"] == pytest.approx(6.0)

    def test_zero_reference_rmse(self) -> None:
        reference = make_report("SL1", 0.0)
        other = make_report("SL2", 0.5)
        assert normalize_reports([reference, other])
        assert other.rmse_normalized is not None
        assert other.rmse_normalized["dlmp"] == float("inf")
        assert reference.rmse_normalized is not None
        assert reference.rmse_normalized["dlmp"] == 1.0

    def test_single_case_stays_raw(self) -> None:
        """Test that one case is reported without normalization."""
        reports = [make_report("custom", 2.5)]
        assert not normalize_reports(reports)
        table = comparison_table(reports)
        assert list(table.index) == ["custom"]
        assert table.loc["custom", "DLMP"] == 2.5

    def test_missing_reference(self) -> None:
        reports = [make_report("SL2", 1.0), make_report("SL2-s2", 2.0)]
        assert not normalize_reports(reports)
        assert list(comparison_table(reports).index) == ["SL2", "SL2-s2"]

    def test_report_serializes(self) -> None:
        data = make_report("SL1", 2.0).to_dict()
        assert data["max_dlmp_dev"] == {"bus": None, "percent": 0.0}
        assert data["rmse_normalized"] is None
