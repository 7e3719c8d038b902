"""Tests for the Matpower case parser and the bid table parser."""

from pathlib import Path

import numpy as np
import pytest

from flexclear.parsers.base import CaseStructureError, ParseError
from flexclear.parsers.bid_csv import BidCsvParser
from flexclear.parsers.matpower import MatpowerParser, parse_case
from tests.conftest import FIXTURES

MINIMAL_HEADER = "function mpc = tiny\nmpc.baseMVA = 10;\n"
GEN = "mpc.gen = [\n\t1\t0\t0\t10\t-10\t1\t10\t1\t10\t0;\n];\n"
BRANCH = "mpc.branch = [\n\t1\t2\t0.01\t0.01\t0\t5\t5\t5\t0\t0\t1;\n];\n"


def bus_table(*rows: str) -> str:
    return "mpc.bus = [\n" + "\n".join(rows) + "\n];\n"


BUS_ROW_1 = "\t1\t3\t0\t0\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;"
BUS_ROW_2 = "\t2\t1\t0.5\t0.2\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;"


class TestMatpowerParser:
    """Tests for MatpowerParser."""

    def test_parses_tables(self) -> None:
        """Test the feeder fixture yields all three tables and the MVA base."""
        case = MatpowerParser().parse(FIXTURES / "feeder8.m")
        assert case.name == "feeder8"
        assert case.base_mva == 10.0
        assert len(case.bus) == 8
        assert len(case.branch) == 7
        assert len(case.gen) == 1
        assert case.slack_bus() == 1
        assert case.conversions == []

    def test_values_land_in_named_columns(self) -> None:
        """Test that numbers are mapped to Matpower column names."""
        case = MatpowerParser().parse(FIXTURES / "feeder8.m")
        bus3 = case.bus.loc[case.bus["bus_i"] == 3].iloc[0]
        assert bus3["Pd"] == pytest.approx(0.8)
        assert bus3["Qd"] == pytest.approx(0.4)
        first = case.branch.iloc[0]
        assert (first["fbus"], first["tbus"]) == (1, 2)
        assert first["rateA"] == 8

    def test_extra_columns_are_dropped(self) -> None:
        """Test that OPF columns beyond the power-flow ones are ignored."""
        case = MatpowerParser().parse(FIXTURES / "feeder8.m")
        assert "angmin" not in case.branch.columns
        assert list(case.branch.columns)[-1] == "status"

    def test_ohm_and_kw_conversions(self) -> None:
        """Test impedances in ohms and loads in kW are converted."""
        case = MatpowerParser().parse(FIXTURES / "feeder3_ohm.m")
        z_base = 12.66**2 / 10.0
        assert case.branch["r"].iloc[0] == pytest.approx(0.0922 / z_base)
        assert case.branch["x"].iloc[1] == pytest.approx(0.2511 / z_base)
        assert case.bus["Pd"].iloc[1] == pytest.approx(0.1)
        assert case.bus["Qd"].iloc[2] == pytest.approx(0.14)
        assert len(case.conversions) == 2

    def test_missing_gen_table(self) -> None:
        """Test that a missing required table is named in the error."""
        with pytest.raises(CaseStructureError) as exc_info:
            MatpowerParser().parse(FIXTURES / "missing_gen.m")
        assert exc_info.value.missing == "gen"
        assert exc_info.value.file_path == FIXTURES / "missing_gen.m"

    def test_missing_base_mva(self) -> None:
        """Test that a case without baseMVA is rejected."""
        text = bus_table(BUS_ROW_1, BUS_ROW_2) + GEN + BRANCH
        with pytest.raises(CaseStructureError, match="baseMVA"):
            parse_case(text)

    def test_invalid_token_reports_line(self) -> None:
        """Test that a malformed number carries its line number."""
        bad = "\t2\t1\tabc\t0.2\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;"
        text = MINIMAL_HEADER + bus_table(BUS_ROW_1, bad) + GEN + BRANCH
        with pytest.raises(ParseError) as exc_info:
            parse_case(text)
        assert exc_info.value.line == 5
        assert "abc" in str(exc_info.value)

    def test_ragged_row_reports_line(self) -> None:
        """Test that a row with the wrong width is rejected at its own line."""
        short = "\t2\t1\t0.5\t0.2\t0\t0\t1\t1\t0\t12.66\t1\t1.1;"
        text = MINIMAL_HEADER + bus_table(BUS_ROW_1, short) + GEN + BRANCH
        with pytest.raises(ParseError) as exc_info:
            parse_case(text)
        assert exc_info.value.line == 5

    def test_unterminated_matrix(self) -> None:
        """Test that a matrix without a closing bracket is rejected."""
        text = MINIMAL_HEADER + "mpc.bus = [\n" + BUS_ROW_1 + "\n"
        with pytest.raises(ParseError, match="unterminated"):
            parse_case(text)

    def test_special_values(self) -> None:
        """Test that Inf tokens are read as infinity."""
        inf_branch = "mpc.branch = [\n\t1\t2\t0.01\t0.01\t0\tInf\t0\t0\t0\t0\t1;\n];\n"
        case = parse_case(MINIMAL_HEADER + bus_table(BUS_ROW_1, BUS_ROW_2) + GEN + inf_branch)
        assert np.isinf(case.branch["rateA"].iloc[0])

    def test_comments_are_ignored(self) -> None:
        """Test that trailing % comments inside a matrix are skipped."""
        commented = BUS_ROW_2 + "  % load bus"
        case = parse_case(MINIMAL_HEADER + bus_table(BUS_ROW_1, commented) + GEN + BRANCH)
        assert len(case.bus) == 2

    def test_file_not_found(self, tmp_path: Path) -> None:
        """Test that a missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            MatpowerParser().parse(tmp_path / "nope.m")

    def test_can_parse_by_extension(self) -> None:
        """Test the extension check."""
        parser = MatpowerParser()
        assert parser.can_parse(Path("case141.m"))
        assert not parser.can_parse(Path("case141.csv"))


class TestBidCsvParser:
    """Tests for BidCsvParser."""

    def test_reads_bids(self) -> None:
        """Test that the fixture table yields one bid per row."""
        bids = BidCsvParser().parse(FIXTURES / "bids_feeder8.csv")
        assert [b.bus for b in bids] == [5, 7]
        assert bids[0].qty_d_up == pytest.approx(0.4)
        assert bids[1].cost_d_dn == pytest.approx(36.0)

    def test_duplicate_bus(self) -> None:
        """Test that two bids for the same bus are rejected with a row number."""
        text = (
            "bus,qty_p_up,qty_p_dn,qty_d_up,qty_d_dn,cost_p_up,cost_p_dn,cost_d_up,cost_d_dn\n"
            "5,0,0,1,0,0,0,40,0\n"
            "5,0,0,1,0,0,0,41,0\n"
        )
        with pytest.raises(ParseError, match="duplicate") as exc_info:
            BidCsvParser().parse_text(text)
        assert exc_info.value.line == 3

    def test_missing_column(self) -> None:
        """Test that a table without every cost column is rejected."""
        text = "bus,qty_p_up,qty_p_dn,qty_d_up,qty_d_dn\n5,0,0,1,0\n"
        with pytest.raises(ParseError, match="cost_p_up"):
            BidCsvParser().parse_text(text)

    def test_negative_quantity(self) -> None:
        """Test that a negative cap is reported as a parse error."""
        text = (
            "bus,qty_p_up,qty_p_dn,qty_d_up,qty_d_dn,cost_p_up,cost_p_dn,cost_d_up,cost_d_dn\n"
            "5,0,0,-1,0,0,0,40,0\n"
        )
        with pytest.raises(ParseError, match="non-negative"):
            BidCsvParser().parse_text(text)
