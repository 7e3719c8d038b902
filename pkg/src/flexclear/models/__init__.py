"""Data models for networks, bids, constraint systems and market results."""

from flexclear.models.bids import BaseProfile, FlexBid, ScenarioConfig, SpreadLevel
from flexclear.models.network import UPPER_GRID, Branch, Bus, RadialNetwork
from flexclear.models.system import (
    ConeConstraint,
    ConeKind,
    ConstraintSystem,
    Formulation,
    RowTag,
    VariableLayout,
)

__all__ = [
    "Bus",
    "Branch",
    "RadialNetwork",
    "UPPER_GRID",
    "BaseProfile",
    "FlexBid",
    "ScenarioConfig",
    "SpreadLevel",
    "ConeConstraint",
    "ConeKind",
    "ConstraintSystem",
    "Formulation",
    "RowTag",
    "VariableLayout",
]
