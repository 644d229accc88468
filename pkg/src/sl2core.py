"""
SL(2,R) linear algebra on the projective line.

Closed-form 2x2 arithmetic: unit-determinant matrices, directions in
RP^1 = R/(pi Z), the singular decomposition read off the eigen-analysis of
A^T A, and the projective action. Everything here is an immutable value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DeterminantDriftError, NearRotationError

DET_TOL = 1e-9
MUL_DET_TOL = 1e-6
# above this size the computed determinant is round-off, not information
_RESOLVABLE_DET_SCALE = 1e4
TOL_ROT = 1e-10
WRAP_TOL = 1e-12


def normalize_angle(angle: float) -> float:
    """Reduce an angle into [0, pi); values within WRAP_TOL of pi wrap to 0."""
    a = math.fmod(float(angle), math.pi)
    if a < 0.0:
        a += math.pi
    if math.pi - a < WRAP_TOL or a >= math.pi:
        a = 0.0
    return a


def _det_drift(a11: float, a12: float, a21: float, a22: float) -> float:
    # measured against the size of the determinant's own terms
    scale = max(1.0, abs(a11 * a22) + abs(a12 * a21))
    return abs(a11 * a22 - a12 * a21 - 1.0) / scale


@dataclass(frozen=True)
class Mat2:
    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22"):
            object.__setattr__(self, name, float(getattr(self, name)))
        drift = _det_drift(self.a11, self.a12, self.a21, self.a22)
        if not drift <= DET_TOL:
            raise DeterminantDriftError(
                f"matrix [[{self.a11!r}, {self.a12!r}], [{self.a21!r}, {self.a22!r}]] "
                f"is not in SL(2,R): relative determinant drift {drift:.3e}"
            )

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, arr) -> "Mat2":
        m = np.asarray(arr, dtype=float).reshape(2, 2)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def trace(self) -> float:
        return self.a11 + self.a22

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def apply(self, x: float, y: float) -> tuple:
        return (self.a11 * x + self.a12 * y, self.a21 * x + self.a22 * y)

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return mul(self, other)


@dataclass(frozen=True)
class ProjPoint:
    """A direction in RP^1, stored as an angle in [0, pi)."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", normalize_angle(self.angle))

    @classmethod
    def of_vector(cls, x: float, y: float) -> "ProjPoint":
        return cls(math.atan2(y, x))

    def unit(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    def distance(self, other: "ProjPoint") -> float:
        return angular_distance(self.angle, other.angle)


def angular_distance(a, b):
    """Metric on RP^1; works elementwise on arrays of angles."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), math.pi))
    d = np.minimum(d, math.pi - d)
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class Svd2:
    norm: float
    contract_dir: ProjPoint
    expand_dir: ProjPoint
    orientation: int = 1  # RP^1 forgets the sign of R_theta; this restores it

    def reconstruct(self) -> Mat2:
        core = mul(
            mul(rotation(self.expand_dir.angle), diagonal(self.norm)),
            rotation(math.pi / 2 - self.contract_dir.angle),
        )
        if self.orientation < 0:
            return Mat2(-core.a11, -core.a12, -core.a21, -core.a22)
        return core


def rotation(theta: float) -> Mat2:
    c, s = math.cos(theta), math.sin(theta)
    return Mat2(c, -s, s, c)


def diagonal(d: float) -> Mat2:
    """diag(d, 1/d)."""
    return Mat2(d, 0.0, 0.0, 1.0 / d)


def mul(a: Mat2, b: Mat2) -> Mat2:
    a11 = a.a11 * b.a11 + a.a12 * b.a21
    a12 = a.a11 * b.a12 + a.a12 * b.a22
    a21 = a.a21 * b.a11 + a.a22 * b.a21
    a22 = a.a21 * b.a12 + a.a22 * b.a22
    drift = _det_drift(a11, a12, a21, a22)
    if not drift <= MUL_DET_TOL:
        raise DeterminantDriftError(
            f"product determinant drifted by {drift:.3e}; use scaled cocycle products"
        )
    if abs(a11 * a22) + abs(a12 * a21) > _RESOLVABLE_DET_SCALE:
        return Mat2(a11, a12, a21, a22)
    t = math.sqrt(a11 * a22 - a12 * a21)
    return Mat2(a11 / t, a12 / t, a21 / t, a22 / t)


def inverse(a: Mat2) -> Mat2:
    return Mat2(a.a22, -a.a12, -a.a21, a.a11)


def symmetric_eigen(p, q, w):
    """
    Closed-form top eigenpair of the symmetric matrix [[p, q], [q, w]].

    Returns (largest eigenvalue, angle of its eigenvector). Accepts numpy
    arrays elementwise.
    """
    half_diff = 0.5 * (p - w)
    mu = 0.5 * (p + w) + np.hypot(half_diff, q)
    phi = 0.5 * np.arctan2(2.0 * q, p - w)
    return mu, phi


def svd2(a: Mat2) -> Svd2:
    p = a.a11 * a.a11 + a.a21 * a.a21
    w = a.a12 * a.a12 + a.a22 * a.a22
    q = a.a11 * a.a12 + a.a21 * a.a22
    mu, phi = symmetric_eigen(p, q, w)
    norm = math.sqrt(float(mu))
    if norm < 1.0 + TOL_ROT:
        raise NearRotationError(f"norm {norm!r} is within {TOL_ROT} of a rotation")
    phi = float(phi)
    x, y = a.apply(math.cos(phi), math.sin(phi))
    contract = ProjPoint(phi + math.pi / 2)
    expand = ProjPoint(math.atan2(y, x))

    core = mul(
        mul(rotation(expand.angle), diagonal(norm)),
        rotation(math.pi / 2 - contract.angle),
    )
    agreement = (core.a11 * a.a11 + core.a12 * a.a12
                 + core.a21 * a.a21 + core.a22 * a.a22)
    return Svd2(norm=norm, contract_dir=contract, expand_dir=expand,
                orientation=1 if agreement >= 0 else -1)


def proj_act(a: Mat2, p: ProjPoint) -> ProjPoint:
    x, y = a.apply(math.cos(p.angle), math.sin(p.angle))
    return ProjPoint(math.atan2(y, x))
