"""Bid-set export in the format ``BidCsvParser`` reads back."""

import pandas as pd

from flexclear.models.bids import FlexBid
from flexclear.output.csv_exporter import CSVExporter
from flexclear.parsers.bid_csv import BID_COLUMNS


def bids_frame(bids: list[FlexBid] | tuple[FlexBid, ...]) -> pd.DataFrame:
    return pd.DataFrame([b.to_dict() for b in bids], columns=BID_COLUMNS)


def export_bids(exporter: CSVExporter, bids: list[FlexBid] | tuple[FlexBid, ...], name: str) -> None:
    """Write a bid set; the provenance header is skipped on import."""
    exporter.write_frame(name, bids_frame(bids))
