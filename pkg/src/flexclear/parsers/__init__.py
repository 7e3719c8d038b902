"""Parsers for Matpower case files and bid tables."""

from flexclear.parsers.base import BaseParser, CaseStructureError, ParseError
from flexclear.parsers.bid_csv import BidCsvParser
from flexclear.parsers.matpower import MatpowerParser, RawCase, parse_case

__all__ = [
    "BaseParser",
    "ParseError",
    "CaseStructureError",
    "BidCsvParser",
    "MatpowerParser",
    "RawCase",
    "parse_case",
]
