"""CSV import of externally supplied bid sets."""

import io

import pandas as pd

from flexclear.models.bids import COST_FIELDS, QUANTITY_FIELDS, FlexBid
from flexclear.parsers.base import BaseParser, ParseError
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

BID_COLUMNS = ["bus", *QUANTITY_FIELDS, *COST_FIELDS]


class BidCsvParser(BaseParser[list[FlexBid]]):
    """Parser for bid tables with one row per bus.

    Expected header: ``bus`` followed by the four quantity caps (MW) and the
    four costs (EUR/MWh). Lines starting with ``#`` are ignored, so files
    written by the exporter (provenance header included) read back unchanged.
    """

    @property
    def supported_extensions(self) -> list[str]:
        return [".csv"]

    def parse_text(self, text: str) -> list[FlexBid]:
        try:
            df = pd.read_csv(io.StringIO(text), comment="#", skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"unreadable bid table: {e}") from e

        df.columns = [str(c).strip().lower() for c in df.columns]
        missing = [c for c in BID_COLUMNS if c not in df.columns]
        if missing:
            raise ParseError(f"bid table is missing columns: {', '.join(missing)}")

        bids: list[FlexBid] = []
        seen: set[int] = set()
        for offset, row in enumerate(df[BID_COLUMNS].itertuples(index=False)):
            # Row numbers relative to the data block; header is row 1.
            line = offset + 2
            try:
                values = [float(v) for v in row]
            except (TypeError, ValueError):
                raise ParseError(f"non-numeric value in row {list(row)}", line=line) from None
            bus = int(values[0])
            if bus != values[0]:
                raise ParseError(f"bus id {values[0]} is not an integer", line=line)
            if bus in seen:
                raise ParseError(f"duplicate bid for bus {bus}", line=line)
            seen.add(bus)
            try:
                bids.append(FlexBid(bus, *values[1:]))
            except ValueError as e:
                raise ParseError(str(e), line=line) from e

        logger.debug(f"Read {len(bids)} bids")
        return bids
