"""Cone arithmetic for the interior-point solver.

The solver works on a product cone made of a nonnegative orthant followed by
second-order cones ``u0 >= ||u[1:]||``. Rotated cones are mapped onto
second-order cones by an orthogonal change of coordinates, which preserves
self-duality.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from flexclear.models.system import ConeConstraint, ConeKind

_SQRT_HALF = math.sqrt(0.5)


def rotation(dim: int) -> sp.csr_matrix:
    """Orthogonal map from rotated-cone to second-order-cone coordinates.

    ``(u0, u1, w) -> ((u0 + u1)/sqrt2, w, (u0 - u1)/sqrt2)``.
    """
    rows = [0, 0, dim - 1, dim - 1] + list(range(1, dim - 1))
    cols = [0, 1, 0, 1] + list(range(2, dim))
    data = [_SQRT_HALF, _SQRT_HALF, _SQRT_HALF, -_SQRT_HALF] + [1.0] * (dim - 2)
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def to_standard(cone: ConeConstraint) -> tuple[sp.csr_matrix, np.ndarray]:
    """``(G, h)`` of the cone written as a second-order cone."""
    if cone.kind is ConeKind.SOC:
        return cone.G, cone.h
    T = rotation(cone.dim)
    return sp.csr_matrix(T @ cone.G), T @ cone.h


def cone_entries(cone: ConeConstraint, x: np.ndarray) -> np.ndarray:
    """Value of ``h - G x`` for a cone."""
    return np.asarray(cone.h - cone.G @ x, dtype=float)


def cone_violation(kind: ConeKind, u: np.ndarray) -> float:
    """Distance-like measure of how far ``u`` lies outside its cone (0 inside)."""
    if kind is ConeKind.RSOC:
        u = rotation(len(u)) @ u
    return max(0.0, float(np.linalg.norm(u[1:])) - float(u[0]))


@dataclass(frozen=True)
class NTScaling:
    """Nesterov-Todd scaling point ``W`` with ``W z = W^{-1} s = lam``.

    Attributes:
        orthant: Diagonal of W on the orthant block.
        eta: Per second-order cone scale factor.
        wbar: Per second-order cone normalized scaling vector (``wbar' J wbar = 1``).
        lam: Scaled variable.
    """

    orthant: np.ndarray
    eta: list[float]
    wbar: list[np.ndarray]
    lam: np.ndarray


class ProductCone:
    """Orthant of dimension ``n_orthant`` followed by second-order cones."""

    def __init__(self, n_orthant: int, soc_dims: list[int]):
        self.n_orthant = n_orthant
        self.soc_dims = list(soc_dims)
        self.slices: list[slice] = []
        start = n_orthant
        for d in self.soc_dims:
            self.slices.append(slice(start, start + d))
            start += d
        self.dim = start

    @property
    def degree(self) -> int:
        return self.n_orthant + len(self.soc_dims)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.n_orthant] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def margin(self, u: np.ndarray) -> float:
        """Smallest 'eigenvalue' of u: positive iff u is interior."""
        values = [float(np.min(u[: self.n_orthant]))] if self.n_orthant else []
        for sl in self.slices:
            values.append(float(u[sl.start] - np.linalg.norm(u[sl.start + 1 : sl.stop])))
        return min(values) if values else 1.0

    def shift_interior(self, u: np.ndarray) -> np.ndarray:
        """Shift u along the identity so that it becomes interior."""
        m = self.margin(u)
        if m <= 0:
            return u + (1.0 - m) * self.identity()
        return u

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product ``u o v``."""
        out = np.empty(self.dim)
        k = self.n_orthant
        out[:k] = u[:k] * v[:k]
        for sl in self.slices:
            u0, u1 = u[sl.start], u[sl.start + 1 : sl.stop]
            v0, v1 = v[sl.start], v[sl.start + 1 : sl.stop]
            out[sl.start] = u0 * v0 + u1 @ v1
            out[sl.start + 1 : sl.stop] = u0 * v1 + v0 * u1
        return out

    def inverse_product(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Solve ``lam o u = v`` for u."""
        out = np.empty(self.dim)
        k = self.n_orthant
        out[:k] = v[:k] / lam[:k]
        for sl in self.slices:
            l0, l1 = lam[sl.start], lam[sl.start + 1 : sl.stop]
            v0, v1 = v[sl.start], v[sl.start + 1 : sl.stop]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * v0 - l1 @ v1) / det
            out[sl.start] = u0
            out[sl.start + 1 : sl.stop] = (v1 - u0 * l1) / l0
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest alpha with ``u + alpha du`` in the cone (inf when unbounded)."""
        alpha = math.inf
        k = self.n_orthant
        if k:
            neg = du[:k] < 0
            if np.any(neg):
                alpha = float(np.min(-u[:k][neg] / du[:k][neg]))
        for sl in self.slices:
            alpha = min(alpha, _soc_step(u[sl], du[sl]))
        return alpha

    def scaling(self, s: np.ndarray, z: np.ndarray) -> NTScaling:
        """Nesterov-Todd scaling for interior s, z."""
        k = self.n_orthant
        orthant = np.sqrt(s[:k] / z[:k])
        lam = np.empty(self.dim)
        lam[:k] = np.sqrt(s[:k] * z[:k])
        etas: list[float] = []
        wbars: list[np.ndarray] = []
        for sl in self.slices:
            sb, zb = s[sl], z[sl]
            s_norm = math.sqrt(max(_jdot(sb, sb), 1e-300))
            z_norm = math.sqrt(max(_jdot(zb, zb), 1e-300))
            s_bar = sb / s_norm
            z_bar = zb / z_norm
            gamma = math.sqrt(max((1.0 + float(z_bar @ s_bar)) / 2.0, 1e-300))
            w = s_bar.copy()
            w[0] += z_bar[0]
            w[1:] -= z_bar[1:]
            w /= 2.0 * gamma
            eta = math.sqrt(s_norm / z_norm)
            etas.append(eta)
            wbars.append(w)
            lam[sl] = _apply_w(eta, w, zb)
        return NTScaling(orthant=orthant, eta=etas, wbar=wbars, lam=lam)

    def apply_w(self, scaling: NTScaling, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        k = self.n_orthant
        out[:k] = scaling.orthant * v[:k]
        for sl, eta, w in zip(self.slices, scaling.eta, scaling.wbar, strict=True):
            out[sl] = _apply_w(eta, w, v[sl])
        return out

    def apply_w_inv(self, scaling: NTScaling, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        k = self.n_orthant
        out[:k] = v[:k] / scaling.orthant
        for sl, eta, w in zip(self.slices, scaling.eta, scaling.wbar, strict=True):
            jw = w.copy()
            jw[1:] = -jw[1:]
            out[sl] = _apply_w(1.0 / eta, jw, v[sl])
        return out

    def w_squared(self, scaling: NTScaling) -> sp.csc_matrix:
        """Sparse block-diagonal ``W^2``."""
        blocks: list[sp.spmatrix] = []
        if self.n_orthant:
            blocks.append(sp.diags(scaling.orthant**2))
        for eta, w in zip(scaling.eta, scaling.wbar, strict=True):
            block = 2.0 * np.outer(w, w)
            block[0, 0] -= 1.0
            block[1:, 1:] += np.eye(len(w) - 1)
            blocks.append(sp.csc_matrix(eta**2 * block))
        if not blocks:
            return sp.csc_matrix((0, 0))
        return sp.block_diag(blocks, format="csc")


def _jdot(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[0] - u[1:] @ v[1:])


def _apply_w(eta: float, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``eta * [[w0, w1'], [w1, I + w1 w1'/(1 + w0)]] v``."""
    w0, w1 = w[0], w[1:]
    v0, v1 = v[0], v[1:]
    d = w1 @ v1
    out = np.empty_like(v)
    out[0] = w0 * v0 + d
    out[1:] = v1 + (v0 + d / (1.0 + w0)) * w1
    return eta * out


def _soc_step(u: np.ndarray, du: np.ndarray) -> float:
    """Smallest positive root of ``(u + a du)' J (u + a du) = 0``."""
    a = _jdot(du, du)
    b = _jdot(u, du)
    c = max(_jdot(u, u), 0.0)
    scale = max(abs(a), abs(b), c, 1e-300)
    if abs(a) <= 1e-14 * scale:
        return -c / (2.0 * b) if b < 0 else math.inf
    disc = b * b - a * c
    if disc < 0:
        return math.inf
    root = math.sqrt(disc)
    q = -(b + math.copysign(root, b))
    candidates = []
    if q != 0:
        candidates.extend([q / a, c / q])
    positive = [t for t in candidates if t > 0]
    return min(positive) if positive else math.inf
