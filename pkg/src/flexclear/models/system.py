"""Solver-ready constraint systems.

A system reads::

    minimize    c'x
    subject to  A_eq x = b_eq
                G x <= h
                h_k - G_k x in K_k      for every cone k
                lb <= x <= ub

Cones are second-order cones (``s0 >= ||s[1:]||``) or rotated cones
(``2 * s0 * s1 >= ||s[2:]||^2`` with ``s0, s1 >= 0``).
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

SYSTEM_DUMP_VERSION = 1


class Formulation(str, Enum):
    """Market formulation."""

    LP = "lp"
    SOCP = "socp"

    @classmethod
    def parse(cls, value: "str | Formulation") -> "Formulation":
        if isinstance(value, Formulation):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"Unknown formulation '{value}', expected lp or socp") from None


class ConeKind(str, Enum):
    SOC = "soc"
    RSOC = "rsoc"


@dataclass(frozen=True)
class RowTag:
    """Identifies the model constraint behind a row or cone.

    Attributes:
        family: Constraint family, e.g. ``p_balance``, ``q_balance``,
            ``voltage``, ``flow_polygon``, ``flow_cone``, ``current_cone``.
        bus: Bus id; for branch constraints the receiving bus.
        index: Position inside the family for the same bus (polygon edge).
    """

    family: str
    bus: int
    index: int = 0

    def to_list(self) -> list[Any]:
        return [self.family, self.bus, self.index]

    @classmethod
    def from_list(cls, data: list[Any]) -> "RowTag":
        return cls(str(data[0]), int(data[1]), int(data[2]))


@dataclass(frozen=True)
class ConeConstraint:
    """``h - G x`` lies in the cone of the given kind."""

    kind: ConeKind
    G: sp.csr_matrix
    h: np.ndarray
    tag: RowTag

    def __post_init__(self) -> None:
        dim = self.G.shape[0]
        if dim != len(self.h):
            raise ValueError(f"cone {self.tag}: G has {dim} rows but h has {len(self.h)}")
        minimum = 2 if self.kind is ConeKind.SOC else 3
        if dim < minimum:
            raise ValueError(f"cone {self.tag}: dimension {dim} below {minimum} for {self.kind.value}")

    @property
    def dim(self) -> int:
        return int(self.G.shape[0])


@dataclass
class VariableLayout:
    """Column index of every model variable.

    Activation maps are keyed by bid bus; network maps by bus (branch
    variables by receiving bus). ``l`` is empty for the LP.
    """

    dp_up: dict[int, int] = field(default_factory=dict)
    dp_dn: dict[int, int] = field(default_factory=dict)
    dd_up: dict[int, int] = field(default_factory=dict)
    dd_dn: dict[int, int] = field(default_factory=dict)
    q: dict[int, int] = field(default_factory=dict)
    P: dict[int, int] = field(default_factory=dict)
    Q: dict[int, int] = field(default_factory=dict)
    v: dict[int, int] = field(default_factory=dict)
    l: dict[int, int] = field(default_factory=dict)  # noqa: E741

    GROUPS = ("dp_up", "dp_dn", "dd_up", "dd_dn", "q", "P", "Q", "v", "l")

    def add(self, group: str, key: int) -> int:
        """Allocate the next column for ``group[key]``."""
        index = self.n_vars
        getattr(self, group)[key] = index
        return index

    @property
    def n_vars(self) -> int:
        return sum(len(getattr(self, g)) for g in self.GROUPS)

    def names(self) -> list[str]:
        """Human-readable column names, ``group[key]``."""
        out = [""] * self.n_vars
        for group in self.GROUPS:
            for key, index in getattr(self, group).items():
                out[index] = f"{group}[{key}]"
        return out

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {g: {str(k): v for k, v in getattr(self, g).items()} for g in self.GROUPS}

    @classmethod
    def from_dict(cls, data: dict[str, dict[str, int]]) -> "VariableLayout":
        layout = cls()
        for g in cls.GROUPS:
            getattr(layout, g).update({int(k): int(v) for k, v in data.get(g, {}).items()})
        return layout


def _csr(matrix: Any, n_cols: int) -> sp.csr_matrix:
    if matrix is None:
        return sp.csr_matrix((0, n_cols))
    return sp.csr_matrix(matrix, dtype=float)


@dataclass(frozen=True)
class ConstraintSystem:
    """Linear objective with linear, conic and bound constraints."""

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cones: tuple[ConeConstraint, ...] = ()
    eq_tags: tuple[RowTag, ...] = ()
    ineq_tags: tuple[RowTag, ...] = ()
    layout: VariableLayout | None = None
    formulation: Formulation | None = None
    base_mva: float = 1.0

    def __post_init__(self) -> None:
        n = len(self.c)
        object.__setattr__(self, "A_eq", _csr(self.A_eq, n))
        object.__setattr__(self, "G", _csr(self.G, n))
        for name, matrix, rhs in (("A_eq", self.A_eq, self.b_eq), ("G", self.G, self.h)):
            if matrix.shape[1] != n:
                raise ValueError(f"{name} has {matrix.shape[1]} columns, expected {n}")
            if matrix.shape[0] != len(rhs):
                raise ValueError(f"{name} has {matrix.shape[0]} rows but right-hand side has {len(rhs)}")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bound vectors must match the number of variables")
        if self.eq_tags and len(self.eq_tags) != self.A_eq.shape[0]:
            raise ValueError("eq_tags must tag every equality row")
        if self.ineq_tags and len(self.ineq_tags) != self.G.shape[0]:
            raise ValueError("ineq_tags must tag every inequality row")
        for cone in self.cones:
            if cone.G.shape[1] != n:
                raise ValueError(f"cone {cone.tag} has {cone.G.shape[1]} columns, expected {n}")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_eq(self) -> int:
        return int(self.A_eq.shape[0])

    @property
    def n_ineq(self) -> int:
        return int(self.G.shape[0])

    @property
    def is_conic(self) -> bool:
        return bool(self.cones)

    def rows_of(self, family: str) -> dict[int, int]:
        """Map bus -> equality row for one tagged family."""
        return {tag.bus: k for k, tag in enumerate(self.eq_tags) if tag.family == family}

    def with_objective(self, c: np.ndarray) -> "ConstraintSystem":
        """Copy with a different objective vector."""
        return ConstraintSystem(
            c=np.asarray(c, dtype=float),
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            G=self.G,
            h=self.h,
            lb=self.lb,
            ub=self.ub,
            cones=self.cones,
            eq_tags=self.eq_tags,
            ineq_tags=self.ineq_tags,
            layout=self.layout,
            formulation=self.formulation,
            base_mva=self.base_mva,
        )

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready debug dump (sparse matrices as COO triplets)."""

        def coo(m: sp.csr_matrix) -> dict[str, Any]:
            t = m.tocoo()
            return {"shape": list(t.shape), "row": t.row.tolist(), "col": t.col.tolist(), "data": t.data.tolist()}

        def vec(a: np.ndarray) -> list[float | None]:
            # JSON has no infinity; unbounded entries are written as null.
            return [None if not np.isfinite(x) else float(x) for x in a]

        return {
            "version": SYSTEM_DUMP_VERSION,
            "formulation": self.formulation.value if self.formulation else None,
            "base_mva": self.base_mva,
            "n_vars": self.n_vars,
            "c": self.c.tolist(),
            "A_eq": coo(self.A_eq),
            "b_eq": self.b_eq.tolist(),
            "eq_tags": [t.to_list() for t in self.eq_tags],
            "G": coo(self.G),
            "h": self.h.tolist(),
            "ineq_tags": [t.to_list() for t in self.ineq_tags],
            "lb": vec(self.lb),
            "ub": vec(self.ub),
            "cones": [
                {"kind": k.kind.value, "G": coo(k.G), "h": k.h.tolist(), "tag": k.tag.to_list()} for k in self.cones
            ],
            "layout": self.layout.to_dict() if self.layout else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ConstraintSystem":
        """Rebuild a system from ``to_dict`` output."""
        version = data.get("version")
        if version != SYSTEM_DUMP_VERSION:
            raise ValueError(f"unsupported constraint-system dump version {version}")

        def mat(d: dict[str, Any]) -> sp.csr_matrix:
            return sp.csr_matrix((d["data"], (d["row"], d["col"])), shape=tuple(d["shape"]))

        def vec(values: list[float | None], fill: float) -> np.ndarray:
            return np.array([fill if x is None else x for x in values], dtype=float)

        formulation = data.get("formulation")
        return cls(
            c=np.array(data["c"], dtype=float),
            A_eq=mat(data["A_eq"]),
            b_eq=np.array(data["b_eq"], dtype=float),
            G=mat(data["G"]),
            h=np.array(data["h"], dtype=float),
            lb=vec(data["lb"], -np.inf),
            ub=vec(data["ub"], np.inf),
            cones=tuple(
                ConeConstraint(
                    ConeKind(k["kind"]), mat(k["G"]), np.array(k["h"], dtype=float), RowTag.from_list(k["tag"])
                )
                for k in data.get("cones", [])
            ),
            eq_tags=tuple(RowTag.from_list(t) for t in data.get("eq_tags", [])),
            ineq_tags=tuple(RowTag.from_list(t) for t in data.get("ineq_tags", [])),
            layout=VariableLayout.from_dict(data["layout"]) if data.get("layout") else None,
            formulation=Formulation(formulation) if formulation else None,
            base_mva=float(data.get("base_mva", 1.0)),
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "ConstraintSystem":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
