"""Output generation for CSV and JSON exports."""

from flexclear.output.bid_export import bids_frame, export_bids
from flexclear.output.csv_exporter import CSVExporter, deterministic_plot_rows, file_stem, monte_carlo_plot_rows
from flexclear.output.json_exporter import JSONExporter
from flexclear.output.provenance import build_provenance

__all__ = [
    "CSVExporter",
    "JSONExporter",
    "bids_frame",
    "build_provenance",
    "deterministic_plot_rows",
    "export_bids",
    "file_stem",
    "monte_carlo_plot_rows",
]
