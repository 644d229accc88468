"""
Potentials, Schrödinger transfer matrices and cocycle products.

A product A_n(k) is never formed entry by entry. It is carried as

    A_n(k) = R_frame . [[r, r*shear], [0, 1/r]],   r = exp(log_r)

and re-factored after every factor, so its entries cannot overflow at any
depth. Singular values and directions are read off the triangular part.
``ProductTable`` does this for a whole array of base sites at once; the
certifier and the witness search are built on it.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import NearRotationError, PotentialBoundError, SolutionOverflowError
from .sl2core import TOL_ROT, Mat2, ProjPoint, symmetric_eigen

_logger = logging.getLogger(__name__)

RENORM_CAP = 1e8
OVERFLOW_LIMIT = 1e300
_EXP_CAP = 700.0
_BOUND_SLACK = 1e-12


# ----------------------------------------------------------------------
# Lattice sequences
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SiteVector:
    """A real sequence on the integer interval [first_index, first_index + len - 1]."""

    first_index: int
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "first_index", int(self.first_index))

    @property
    def last_index(self) -> int:
        return self.first_index + self.values.size - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.first_index, self.last_index + 1)

    def __len__(self) -> int:
        return int(self.values.size)

    def at(self, n: int) -> float:
        if not self.first_index <= n <= self.last_index:
            raise IndexError(f"site {n} outside [{self.first_index}, {self.last_index}]")
        return float(self.values[n - self.first_index])

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def restrict(self, first: int, last: int) -> "SiteVector":
        if first < self.first_index or last > self.last_index or last < first:
            raise IndexError(f"[{first}, {last}] not inside [{self.first_index}, {self.last_index}]")
        lo = first - self.first_index
        return SiteVector(first, self.values[lo:lo + last - first + 1])


# ----------------------------------------------------------------------
# Potential sources
# ----------------------------------------------------------------------

class PotentialSource(ABC):
    """
    A bounded potential v: Z -> [-M, M].

    Subclasses implement ``_evaluate`` on integer arrays. Every public sample
    is checked against the declared bound. Sources hold only frozen
    parameters, so concurrent sampling needs no locking.
    """

    def __init__(self, bound: float, descriptor: Optional[Mapping[str, Any]] = None):
        bound = float(bound)
        if not (math.isfinite(bound) and bound >= 0.0):
            raise ValueError(f"potential bound must be finite and >= 0, got {bound!r}")
        self._bound = bound
        self._descriptor = dict(descriptor or {})

    @property
    def bound(self) -> float:
        return self._bound

    @property
    def descriptor(self) -> Dict[str, Any]:
        return dict(self._descriptor)

    @abstractmethod
    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        ...

    def samples(self, sites) -> np.ndarray:
        idx = np.asarray(sites, dtype=np.int64)
        values = np.asarray(self._evaluate(idx), dtype=float)
        if values.shape != idx.shape:
            values = np.array(np.broadcast_to(values, idx.shape), dtype=float)
        limit = self._bound * (1.0 + _BOUND_SLACK) + _BOUND_SLACK
        bad = ~(np.abs(values) <= limit)
        if bad.any():
            j = int(np.argmax(bad.reshape(-1)))
            raise PotentialBoundError(
                f"v({int(idx.reshape(-1)[j])}) = {values.reshape(-1)[j]!r} "
                f"exceeds the declared bound {self._bound!r} ({self._descriptor.get('family', '?')})"
            )
        return values

    def sample(self, n: int) -> float:
        return float(self.samples(np.array([n]))[0])

    def block(self, first: int, last: int) -> np.ndarray:
        return self.samples(np.arange(first, last + 1))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(bound={self._bound!r}, descriptor={self._descriptor!r})"


class FunctionPotential(PotentialSource):
    """Wraps a callable that maps an integer array to potential values."""

    def __init__(self, func: Callable[[np.ndarray], Any], bound: float,
                 descriptor: Optional[Mapping[str, Any]] = None):
        super().__init__(bound, {"family": "function", **dict(descriptor or {})})
        self._func = func

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        return np.asarray(self._func(sites), dtype=float)


def transfer(E: float, v_n: float) -> Mat2:
    return Mat2(E - v_n, -1.0, 1.0, 0.0)


# ----------------------------------------------------------------------
# Triangular-factor arithmetic (elementwise on numpy arrays)
# ----------------------------------------------------------------------

def _triangle_scaling(log_r):
    # [[r, r t], [0, 1/r]] = exp(|log_r|) * [[alpha, alpha t], [0, beta]]
    g = np.exp(-2.0 * np.abs(log_r))
    positive = np.asarray(log_r) >= 0.0
    alpha = np.where(positive, 1.0, g)
    beta = np.where(positive, g, 1.0)
    return np.abs(log_r), alpha, beta


def _left_multiply(m11, m12, m21, m22, frame, log_r, shear, log_scale=0.0):
    """Factor M . R_frame . T back into R_frame' . T'."""
    c, s = np.cos(frame), np.sin(frame)
    x1 = m11 * c + m12 * s
    y1 = m21 * c + m22 * s
    x2 = m12 * c - m11 * s
    y2 = m22 * c - m21 * s
    a = np.hypot(x1, y1)
    b = (x1 * x2 + y1 * y2) / a
    new_shear = shear + (b / a) * np.exp(np.minimum(-2.0 * log_r, _EXP_CAP))
    return np.arctan2(y1, x1), log_r + np.log(a) + log_scale, new_shear


def _singular_data(frame, log_r, shear):
    """(log_norm, contract angle, expand angle, expanding input angle)."""
    scale, alpha, beta = _triangle_scaling(log_r)
    p = alpha * alpha
    q = p * shear
    w = (alpha * shear) ** 2 + beta * beta
    mu, phi = symmetric_eigen(p, q, w)
    log_norm = np.maximum(scale + 0.5 * np.log(mu), 0.0)
    x = alpha * (np.cos(phi) + shear * np.sin(phi))
    y = beta * np.sin(phi)
    expand = frame + np.arctan2(y, x)
    return log_norm, phi + math.pi / 2, expand, phi


def scaled_log_norms(scale, alpha, beta, shear, x, y):
    """log ||A (x, y)|| from the output of ``_triangle_scaling``; broadcasts."""
    with np.errstate(divide="ignore"):
        return scale + 0.5 * np.log((alpha * (x + shear * y)) ** 2 + (beta * y) ** 2)


def _vector_log_norms(log_r, shear, x, y):
    scale, alpha, beta = _triangle_scaling(log_r)
    return scaled_log_norms(scale, alpha, beta, shear, x, y)


# ----------------------------------------------------------------------
# Products
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CocycleProduct:
    """A_n(k) in factored form (see module docstring)."""

    k: int
    n: int
    frame: float
    log_r: float
    shear: float

    def _data(self):
        log_norm, contract, expand, phi = _singular_data(self.frame, self.log_r, self.shear)
        return float(log_norm), float(contract), float(expand), float(phi)

    @property
    def log_norm(self) -> float:
        return self._data()[0]

    def _require_hyperbolic(self, log_norm: float) -> None:
        if log_norm < math.log1p(TOL_ROT):
            raise NearRotationError(
                f"A_{self.n}({self.k}) has norm within {TOL_ROT} of 1; directions undefined"
            )

    @property
    def contract_dir(self) -> ProjPoint:
        log_norm, contract, _, _ = self._data()
        self._require_hyperbolic(log_norm)
        return ProjPoint(contract)

    @property
    def expand_dir(self) -> ProjPoint:
        log_norm, _, expand, _ = self._data()
        self._require_hyperbolic(log_norm)
        return ProjPoint(expand)

    @property
    def matrix(self) -> Mat2:
        log_norm, _, expand, phi = self._data()
        if log_norm <= math.log(RENORM_CAP):
            r = math.exp(self.log_r)
            c, s = math.cos(self.frame), math.sin(self.frame)
            return Mat2(c * r, c * r * self.shear - s / r,
                        s * r, s * r * self.shear + c / r)
        # R_expand diag(cap, 1/cap) R_-phi, entry by entry so the top singular value is exactly cap
        ce, se = math.cos(expand), math.sin(expand)
        cp, sp = math.cos(phi), math.sin(phi)
        big, small = RENORM_CAP, 1.0 / RENORM_CAP
        return Mat2(ce * big * cp + se * small * sp, ce * big * sp - se * small * cp,
                    se * big * cp - ce * small * sp, se * big * sp + ce * small * cp)

    @property
    def log_norm_scale(self) -> float:
        return max(0.0, self.log_norm - math.log(RENORM_CAP))

    def vector_log_norm(self, x: float, y: float) -> float:
        """log ||A_n(k) (x, y)||."""
        return float(_vector_log_norms(self.log_r, self.shear, x, y))


@dataclass(frozen=True)
class ProductTable:
    """
    All products A_{sign*j}(k) for j = 0..depth over an array of base sites.

    Arrays have shape (depth + 1, len(sites)); row 0 is the identity.
    """

    sites: np.ndarray
    sign: int
    frame: np.ndarray
    log_r: np.ndarray
    shear: np.ndarray

    @property
    def depth(self) -> int:
        return self.frame.shape[0] - 1

    @cached_property
    def _singular(self):
        return _singular_data(self.frame, self.log_r, self.shear)

    @cached_property
    def scaling(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(scale, alpha, beta) with T = exp(scale) [[alpha, alpha*shear], [0, beta]]."""
        return _triangle_scaling(self.log_r)

    @cached_property
    def quadratic_forms(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        (p, q, r) with ||A (cos a, sin a)||^2 = p + q cos 2a + r sin 2a.

        The exp(2 scale) factor is capped at exp(_EXP_CAP); entries past
        float range come out as inf or nan and callers must treat them as huge.
        """
        scale, alpha, beta = self.scaling
        at = alpha * self.shear
        a = alpha * alpha
        d = at * at + beta * beta
        with np.errstate(over="ignore", invalid="ignore"):
            w = np.exp(np.minimum(2.0 * scale, _EXP_CAP))
            return 0.5 * w * (a + d), 0.5 * w * (a - d), w * alpha * at

    def log_norms(self) -> np.ndarray:
        return self._singular[0]

    def singular_angles(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(log_norms, contract angles, expand angles), unreduced angles."""
        log_norm, contract, expand, _ = self._singular
        return log_norm, contract, expand

    def row_log_norms(self, rows, x, y, columns=None) -> np.ndarray:
        """
        log ||A v|| for the given rows (and optionally columns) and vectors.

        ``x``/``y`` broadcast against arrays of shape (len(rows), K, 1), so a
        1-d array of T angles gives a result of shape (len(rows), K, T).
        """
        rows = np.atleast_1d(rows)
        parts = (*self.scaling, self.shear)
        parts = [part[rows] for part in parts]
        if columns is not None:
            columns = np.atleast_1d(columns)
            parts = [part[:, columns] for part in parts]
        scale, alpha, beta, shear = (part[..., None] for part in parts)
        return scaled_log_norms(scale, alpha, beta, shear, x, y)

    def product(self, row: int, column: int) -> CocycleProduct:
        return CocycleProduct(
            k=int(self.sites[column]),
            n=self.sign * int(row),
            frame=float(self.frame[row, column]),
            log_r=float(self.log_r[row, column]),
            shear=float(self.shear[row, column]),
        )


def product_table(src: PotentialSource, E: float, sites: Sequence[int], depth: int,
                  backward: bool = False) -> ProductTable:
    """Tabulate A_j(k) (or A_{-j}(k) when ``backward``) for j = 0..depth."""
    sites = np.atleast_1d(np.asarray(sites, dtype=np.int64))
    if depth < 0:
        raise ValueError("depth must be >= 0")
    shape = (depth + 1, sites.size)
    frame = np.zeros(shape)
    log_r = np.zeros(shape)
    shear = np.zeros(shape)
    if depth and sites.size:
        if not backward:
            lo = int(sites.min())
            x_all = E - src.samples(np.arange(lo, int(sites.max()) + depth))
            offsets = sites - lo
            for j in range(depth):
                x = x_all[offsets + j]
                frame[j + 1], log_r[j + 1], shear[j + 1] = _left_multiply(
                    x, -1.0, 1.0, 0.0, frame[j], log_r[j], shear[j])
        else:
            lo = int(sites.min()) - depth
            x_all = E - src.samples(np.arange(lo, int(sites.max())))
            offsets = sites - lo
            for j in range(depth):
                x = x_all[offsets - j - 1]
                frame[j + 1], log_r[j + 1], shear[j + 1] = _left_multiply(
                    0.0, 1.0, -1.0, x, frame[j], log_r[j], shear[j])
    return ProductTable(sites=sites, sign=-1 if backward else 1,
                        frame=frame, log_r=log_r, shear=shear)


def product(src: PotentialSource, E: float, k: int, n: int) -> CocycleProduct:
    table = product_table(src, E, [k], abs(n), backward=n < 0)
    return table.product(abs(n), 0)


def compose(outer: CocycleProduct, inner: CocycleProduct) -> CocycleProduct:
    """outer . inner, i.e. A_m(k+n) A_n(k) = A_{m+n}(k)."""
    if outer.k != inner.k + inner.n:
        raise ValueError(
            f"cannot compose A_{outer.n}({outer.k}) after A_{inner.n}({inner.k})")
    scale, alpha, beta = _triangle_scaling(outer.log_r)
    frame, log_r, shear = _left_multiply(
        alpha, alpha * outer.shear, 0.0, beta,
        inner.frame, inner.log_r, inner.shear, log_scale=scale)
    return CocycleProduct(k=inner.k, n=inner.n + outer.n,
                          frame=float(outer.frame + frame),
                          log_r=float(log_r), shear=float(shear))


# ----------------------------------------------------------------------
# Solutions of the eigenfunction equation
# ----------------------------------------------------------------------

def solution_from_vector(src: PotentialSource, E: float, v0: Sequence[float],
                         sites: Tuple[int, int]) -> SiteVector:
    """
    Solve u_{n+1} + u_{n-1} + v(n) u_n = E u_n on ``sites`` = (first, last)
    with (u_0, u_{-1}) = v0, by the scalar three-term recurrence run
    forward from 0 and backward from -1.
    """
    first, last = int(sites[0]), int(sites[1])
    if not (first <= -1 and last >= 0):
        raise ValueError(f"range [{first}, {last}] must contain -1 and 0")
    a, b = float(v0[0]), float(v0[1])
    if abs(math.hypot(a, b) - 1.0) > 1e-9:
        raise ValueError(f"initial vector {tuple(v0)!r} is not a unit vector")

    x = (E - src.block(first, last)).tolist()
    u = [0.0] * (last - first + 1)
    i0 = -first
    u[i0], u[i0 - 1] = a, b
    for i in range(i0, last - first):
        u[i + 1] = x[i] * u[i] - u[i - 1]
        if abs(u[i + 1]) > OVERFLOW_LIMIT:
            raise SolutionOverflowError(f"|u_{i + 1 + first}| exceeded {OVERFLOW_LIMIT:g} at E={E!r}")
    for i in range(i0 - 1, 0, -1):
        u[i - 1] = x[i] * u[i] - u[i + 1]
        if abs(u[i - 1]) > OVERFLOW_LIMIT:
            raise SolutionOverflowError(f"|u_{i - 1 + first}| exceeded {OVERFLOW_LIMIT:g} at E={E!r}")
    return SiteVector(first, np.array(u))


def wronskians(first: SiteVector, second: SiteVector) -> np.ndarray:
    """det [[f_n, g_n], [f_{n-1}, g_{n-1}]] for n = first_index+1 .. last_index."""
    if first.first_index != second.first_index or len(first) != len(second):
        raise ValueError("solutions must live on the same range")
    f, g = first.values, second.values
    return f[1:] * g[:-1] - g[1:] * f[:-1]
