"""Comparison and Monte Carlo report models."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from flexclear.models.system import Formulation

RMSE_FIELDS = ("dlmp", "voltage", "flow", "revenue")

# Entities whose |mean| is below this fraction of the system mean get their CV flagged.
CV_FLAG_RATIO = 1e-3


@dataclass
class ComparisonReport:
    """LP-versus-SOCP comparison of one case.

    Attributes:
        case_label: Case name (SL1, SL2, SL2-s2 or custom).
        rmse: Raw RMSE per field in RMSE_FIELDS.
        rmse_normalized: RMSE divided by the reference case's RMSE, or None
            when no reference was given.
        max_dlmp_dev: Bus and relative deviation (%) of the largest LP-vs-SOCP
            DLMP gap; bus is None when every SOCP price is zero.
        lp_objective: LP clearing cost (EUR).
        socp_objective: SOCP clearing cost (EUR).
        binding_lp: Binding lines in the LP clearing.
        binding_socp: Binding lines in the SOCP clearing.
    """

    case_label: str
    rmse: dict[str, float]
    max_dlmp_dev: tuple[int | None, float]
    rmse_normalized: dict[str, float] | None = None
    lp_objective: float = 0.0
    socp_objective: float = 0.0
    binding_lp: list[int] = field(default_factory=list)
    binding_socp: list[int] = field(default_factory=list)

    def normalized_by(self, reference: "ComparisonReport") -> dict[str, float]:
        """RMSEs divided field by field by a reference report's RMSEs.

        A zero reference RMSE normalizes to 1 when this RMSE is zero too and
        to infinity otherwise.
        """
        out = {}
        for name in RMSE_FIELDS:
            ref = reference.rmse[name]
            value = self.rmse[name]
            if ref > 0:
                out[name] = value / ref
            else:
                out[name] = 1.0 if value == 0 else float("inf")
        return out

    def to_dict(self) -> dict[str, Any]:
        bus, dev = self.max_dlmp_dev
        return {
            "case_label": self.case_label,
            "rmse": dict(self.rmse),
            "rmse_normalized": dict(self.rmse_normalized) if self.rmse_normalized is not None else None,
            "max_dlmp_dev": {"bus": bus, "percent": dev},
            "lp_objective": self.lp_objective,
            "socp_objective": self.socp_objective,
            "binding_lp": list(self.binding_lp),
            "binding_socp": list(self.binding_socp),
        }


@dataclass
class MonteCarloStats:
    """Sampled DLMPs and apparent flows of one formulation.

    Attributes:
        formulation: LP or SOCP.
        seed: Scenario seed.
        entities: Column ids per quantity (bus ids for ``dlmp``, receiving
            bus ids for ``flow``).
        values: Per quantity a (used samples x entities) array, rows in
            sample-index order.
        sample_ids: Sample index of every used row.
        failed: Sample indices excluded because the clearing failed.
        attempted: Number of samples attempted.
    """

    formulation: Formulation
    seed: int
    entities: dict[str, list[int]]
    values: dict[str, np.ndarray]
    sample_ids: list[int] = field(default_factory=list)
    failed: list[int] = field(default_factory=list)
    attempted: int = 0

    @property
    def samples(self) -> int:
        """Samples that entered the moments."""
        return len(self.sample_ids)

    def mean(self, quantity: str) -> np.ndarray:
        return np.asarray(self.values[quantity].mean(axis=0))

    def std(self, quantity: str) -> np.ndarray:
        data = self.values[quantity]
        std = np.asarray(data.std(axis=0))
        if data.shape[0]:
            std[np.ptp(data, axis=0) == 0] = 0.0
        return std

    def cv(self, quantity: str) -> np.ndarray:
        """Standard deviation over |mean|; NaN where the mean is exactly zero."""
        mean = np.abs(self.mean(quantity))
        std = self.std(quantity)
        with np.errstate(divide="ignore", invalid="ignore"):
            cv = np.where(mean > 0, std / np.where(mean > 0, mean, 1.0), np.nan)
        return np.where((mean == 0) & (std == 0), 0.0, cv)

    def cv_flags(self, quantity: str) -> np.ndarray:
        """True where the mean is too close to zero for the CV to mean much."""
        mean = np.abs(self.mean(quantity))
        scale = float(mean.mean()) if mean.size else 0.0
        return mean < CV_FLAG_RATIO * scale

    def moments(self, quantity: str) -> pd.DataFrame:
        """Per-entity mean, std, CV and CV flag."""
        return pd.DataFrame(
            {
                "entity": self.entities[quantity],
                "mean": self.mean(quantity),
                "std": self.std(quantity),
                "cv": self.cv(quantity),
                "cv_flag": self.cv_flags(quantity),
            }
        )


@dataclass
class ConvergenceTrace:
    """Running estimates of one quantity against the sample count.

    Attributes:
        quantity: ``dlmp`` or ``flow``.
        formulation: Formulation of the underlying stats.
        entities: Entity ids (columns of the running arrays).
        checkpoints: Sample counts at which estimates were taken.
        running_mean: (checkpoints x entities) running means.
        running_cv: (checkpoints x entities) running CVs.
        drift: Largest relative change of any running mean over the final window.
        threshold: Drift below which the trace counts as converged.
    """

    quantity: str
    formulation: Formulation
    entities: list[int]
    checkpoints: list[int]
    running_mean: np.ndarray
    running_cv: np.ndarray
    drift: float
    threshold: float = 0.01

    @property
    def converged(self) -> bool:
        return self.drift < self.threshold

    def to_frame(self) -> pd.DataFrame:
        """Long-format table: samples, entity, mean, cv."""
        rows = []
        for k, count in enumerate(self.checkpoints):
            for j, entity in enumerate(self.entities):
                rows.append(
                    {
                        "samples": count,
                        "entity": entity,
                        "mean": float(self.running_mean[k, j]),
                        "cv": float(self.running_cv[k, j]),
                    }
                )
        return pd.DataFrame(rows, columns=["samples", "entity", "mean", "cv"])
