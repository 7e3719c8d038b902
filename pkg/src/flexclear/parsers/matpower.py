"""Matpower case-file parser.

Reads the matrix-literal layout used by Matpower ``caseNN.m`` files. Only the
``baseMVA``, ``bus``, ``gen`` and ``branch`` tables are required; other
tables (``gencost``, ``bus_name`` cells, ...) are skipped. The unit-conversion
statements that the radial distribution cases append after their tables
(ohms to p.u. for branch impedances, kW to MW for loads) are recognised and
applied.
"""

import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from flexclear.parsers.base import BaseParser, CaseStructureError, ParseError
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

# Column meanings of the Matpower tables (version 2 case format).
BUS_COLUMNS = ["bus_i", "type", "Pd", "Qd", "Gs", "Bs", "area", "Vm", "Va", "baseKV", "zone", "Vmax", "Vmin"]
GEN_COLUMNS = ["bus", "Pg", "Qg", "Qmax", "Qmin", "Vg", "mBase", "status", "Pmax", "Pmin"]
BRANCH_COLUMNS = ["fbus", "tbus", "r", "x", "b", "rateA", "rateB", "rateC", "ratio", "angle", "status"]

REQUIRED_TABLES = ("baseMVA", "bus", "gen", "branch")

_TABLE_COLUMNS = {"bus": BUS_COLUMNS, "gen": GEN_COLUMNS, "branch": BRANCH_COLUMNS}

_ASSIGN_MATRIX = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_ASSIGN_SCALAR = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([^;%]+);?")
_OHM_CONVERSION = re.compile(
    r"mpc\.branch\(\s*:\s*,\s*\[\s*BR_R[\s,]+BR_X\s*\]\s*\)\s*=\s*"
    r"mpc\.branch\(\s*:\s*,\s*\[\s*BR_R[\s,]+BR_X\s*\]\s*\)\s*/\s*\(\s*Vbase\s*\^\s*2\s*/\s*Sbase\s*\)"
)
_LOAD_CONVERSION = re.compile(
    r"mpc\.bus\(\s*:\s*,\s*\[\s*PD[\s,]+QD\s*\]\s*\)\s*=\s*"
    r"mpc\.bus\(\s*:\s*,\s*\[\s*PD[\s,]+QD\s*\]\s*\)\s*/\s*([0-9.eE+-]+)"
)

_SPECIAL_VALUES = {"inf": np.inf, "+inf": np.inf, "-inf": -np.inf, "nan": np.nan}


@dataclass
class RawCase:
    """Numeric tables of a Matpower case.

    Attributes:
        base_mva: System MVA base.
        bus: Bus table with BUS_COLUMNS.
        gen: Generator table with GEN_COLUMNS.
        branch: Branch table with BRANCH_COLUMNS.
        name: Case function name (``function mpc = caseNN``) or "case".
        conversions: Unit-conversion statements that were applied.
    """

    base_mva: float
    bus: pd.DataFrame
    gen: pd.DataFrame
    branch: pd.DataFrame
    name: str = "case"
    conversions: list[str] = field(default_factory=list)

    def slack_bus(self) -> int | None:
        """Id of the first reference (type 3) bus, if any."""
        ref = self.bus.loc[self.bus["type"] == 3, "bus_i"]
        return int(ref.iloc[0]) if len(ref) else None


def _strip_comment(line: str) -> str:
    idx = line.find("%")
    return line if idx < 0 else line[:idx]


def _to_float(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        special = _SPECIAL_VALUES.get(token.lower())
        if special is None:
            raise ParseError(f"invalid number '{token}' in matrix literal", line=line_no) from None
        return float(special)


class MatpowerParser(BaseParser[RawCase]):
    """Parser for Matpower ``.m`` case files."""

    @property
    def supported_extensions(self) -> list[str]:
        return [".m"]

    def parse_text(self, text: str) -> RawCase:
        """Parse Matpower case content into numeric tables.

        Args:
            text: Case-file content.

        Returns:
            RawCase with bus, gen and branch tables.

        Raises:
            ParseError: Malformed matrix literal (carries the line number).
            CaseStructureError: A required table is missing.
        """
        lines = text.splitlines()
        base_mva: float | None = None
        tables: dict[str, list[tuple[int, list[float]]]] = {}
        name = "case"
        trailer: list[str] = []

        line_no = 0
        while line_no < len(lines):
            raw = lines[line_no]
            code = _strip_comment(raw)
            line_no += 1

            header = re.match(r"^\s*function\s+\w+\s*=\s*(\w+)", code)
            if header:
                name = header.group(1)
                continue

            scalar = _ASSIGN_SCALAR.match(code)
            if scalar:
                base_mva = _to_float(scalar.group(1).strip(), line_no)
                continue

            matrix = _ASSIGN_MATRIX.match(code)
            if matrix:
                table_name = matrix.group(1)
                rows, line_no = self._read_matrix(lines, line_no, matrix.group(2))
                tables[table_name] = rows
                continue

            if code.strip():
                trailer.append(code)

        if base_mva is None:
            raise CaseStructureError("baseMVA")
        for table_name in REQUIRED_TABLES[1:]:
            if table_name not in tables:
                raise CaseStructureError(table_name)

        frames = {tname: self._to_frame(tname, tables[tname]) for tname in _TABLE_COLUMNS}
        case = RawCase(
            base_mva=base_mva,
            bus=frames["bus"],
            gen=frames["gen"],
            branch=frames["branch"],
            name=name,
        )
        self._apply_conversions(case, "\n".join(trailer))
        logger.debug(
            f"Parsed case {case.name}: {len(case.bus)} buses, {len(case.branch)} branches, "
            f"{len(case.gen)} generators, baseMVA={case.base_mva}"
        )
        return case

    def _read_matrix(self, lines: list[str], line_no: int, first: str) -> tuple[list[tuple[int, list[float]]], int]:
        """Collect matrix rows until the closing bracket.

        Args:
            lines: All file lines.
            line_no: Index of the line after the opening one (1-based number of the opening line).
            first: Remainder of the opening line after ``[``.

        Returns:
            Tuple of (rows with their 1-based line numbers, index of the next unread line).
        """
        rows: list[tuple[int, list[float]]] = []
        current: list[float] = []
        chunk = first
        chunk_line = line_no
        while True:
            closed = "]" in chunk
            body = chunk.split("]", 1)[0]
            # A row ends at ';' or at a line break.
            for piece_idx, piece in enumerate(body.split(";")):
                if piece_idx > 0 and current:
                    rows.append((chunk_line, current))
                    current = []
                tokens = [t for t in re.split(r"[\s,]+", piece.strip()) if t]
                current.extend(_to_float(t, chunk_line) for t in tokens)
            if current:
                rows.append((chunk_line, current))
                current = []
            if closed:
                return rows, line_no
            if line_no >= len(lines):
                raise ParseError("unterminated matrix literal (missing ']')", line=chunk_line)
            chunk = _strip_comment(lines[line_no])
            line_no += 1
            chunk_line = line_no

    def _to_frame(self, table_name: str, rows: list[tuple[int, list[float]]]) -> pd.DataFrame:
        columns = _TABLE_COLUMNS[table_name]
        if not rows:
            return pd.DataFrame(columns=columns, dtype=float)
        width = len(rows[0][1])
        for row_line, values in rows:
            if len(values) != width:
                raise ParseError(
                    f"row in '{table_name}' has {len(values)} columns, expected {width}",
                    line=row_line,
                )
        if width < len(columns):
            raise ParseError(
                f"table '{table_name}' has {width} columns, needs at least {len(columns)}",
                line=rows[0][0],
            )
        data = np.array([values[: len(columns)] for _, values in rows], dtype=float)
        return pd.DataFrame(data, columns=columns)

    def _apply_conversions(self, case: RawCase, trailer: str) -> None:
        if _OHM_CONVERSION.search(trailer):
            base_kv = float(case.bus["baseKV"].iloc[0])
            z_base = base_kv**2 / case.base_mva
            case.branch[["r", "x"]] = case.branch[["r", "x"]] / z_base
            case.conversions.append(f"branch r,x ohm -> p.u. (Zbase={z_base:g} ohm)")
        load = _LOAD_CONVERSION.search(trailer)
        if load:
            divisor = float(load.group(1))
            case.bus[["Pd", "Qd"]] = case.bus[["Pd", "Qd"]] / divisor
            case.conversions.append(f"bus Pd,Qd divided by {divisor:g}")
        for note in case.conversions:
            logger.info(f"Case {case.name}: applied conversion {note}")


def parse_case(text: str) -> RawCase:
    """Parse Matpower case content.

    Args:
        text: Case-file content.

    Returns:
        RawCase tables.
    """
    return MatpowerParser().parse_text(text)
