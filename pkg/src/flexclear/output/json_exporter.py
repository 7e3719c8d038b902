"""JSON exports: clearing results, comparison reports, summaries and debug dumps."""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from flexclear.models.market import ClearingResult, PhysicsReport
from flexclear.models.network import RadialNetwork
from flexclear.models.report import ComparisonReport
from flexclear.models.system import ConstraintSystem
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)


def to_jsonable(value: Any) -> Any:
    """Replace numpy scalars and non-finite floats (written as null)."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


class JSONExporter:
    """Writes JSON documents carrying a ``provenance`` object."""

    def __init__(self, directory: Path, provenance: dict[str, Any]):
        self.directory = directory
        self.provenance = provenance

    def write(self, name: str, payload: dict[str, Any]) -> Path:
        """Write ``payload`` plus provenance to ``<name>.json``."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{name}.json"
        document = {"provenance": self.provenance, **to_jsonable(payload)}
        path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    def export_clearing(self, result: ClearingResult, physics: PhysicsReport | None, name: str) -> Path:
        payload = result.to_dict()
        payload["solver"] = result.report.summary()
        if physics is not None:
            payload["physics"] = physics.to_dict()
        return self.write(name, payload)

    def export_network(self, net: RadialNetwork) -> Path:
        return self.write("network", {"network": net.summary()})

    def export_comparison(self, reports: list[ComparisonReport], normalized: bool, reference: str) -> Path:
        return self.write(
            "comparison",
            {
                "normalized": normalized,
                "reference": reference if normalized else None,
                "cases": [r.to_dict() for r in reports],
            },
        )

    def export_diagnostics(self, name: str, error: Exception, details: dict[str, Any]) -> Path:
        """Machine-readable record of a failed run."""
        return self.write(name, {"error": type(error).__name__, "message": str(error), **details})

    def export_system(self, system: ConstraintSystem, name: str) -> Path:
        """Constraint-system dump readable by ``ConstraintSystem.load``."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{name}.json"
        document = {"provenance": self.provenance, **system.to_dict()}
        path.write_text(json.dumps(document), encoding="utf-8")
        return path
