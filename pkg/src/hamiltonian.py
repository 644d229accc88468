"""
Finite sections of (H_v u)_n = u_{n+1} + u_{n-1} + v(n) u_n.

Eigenvalues come from Sturm-sequence bisection. Weyl witnesses are
finitely supported unit vectors with small ||(H_v - E) u||; the smallest
such defect on an interval is the bottom of the spectrum of M^T M, where
M is the band map u -> (H_v - E) u.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky_banded, solveh_banded

from .cocycle import PotentialSource, SiteVector
from .errors import DegenerateNormError, SupportNotFoundError

_logger = logging.getLogger(__name__)

EIG_TOL = 1e-12
_ZERO_PIVOT = 1e-300
DEGENERATE_NORM = 1e-12
_INVERSE_ITERATIONS = 8
_MAX_BISECTIONS = 128


@dataclass(frozen=True)
class FiniteSection:
    """H_v restricted to [first_index, first_index + size - 1], Dirichlet ends."""

    first_index: int
    diagonal: np.ndarray

    def __post_init__(self):
        d = np.array(self.diagonal, dtype=float).reshape(-1)
        if d.size < 1:
            raise ValueError("a finite section needs size >= 1")
        d.flags.writeable = False
        object.__setattr__(self, "diagonal", d)
        object.__setattr__(self, "first_index", int(self.first_index))

    @classmethod
    def from_source(cls, src: PotentialSource, first_index: int, size: int) -> "FiniteSection":
        return cls(first_index, src.block(first_index, first_index + size - 1))

    @classmethod
    def centered(cls, src: PotentialSource, size: int) -> "FiniteSection":
        return cls.from_source(src, -(size // 2), size)

    @property
    def size(self) -> int:
        return int(self.diagonal.size)

    @property
    def last_index(self) -> int:
        return self.first_index + self.size - 1

    def dense(self, E_shift: float = 0.0) -> np.ndarray:
        n = self.size
        return (np.diag(self.diagonal - E_shift) + np.diag(np.ones(n - 1), 1)
                + np.diag(np.ones(n - 1), -1))


@dataclass(frozen=True)
class WeylWitness:
    """A unit vector on ``support`` with ||(H_v - E) u|| = ``defect``."""

    support: Tuple[int, int]
    vector: np.ndarray
    defect: float
    energy: float

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(-1)
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)
        first, last = int(self.support[0]), int(self.support[1])
        if last - first + 1 != v.size or v.size < 1:
            raise ValueError(f"support [{first}, {last}] does not match vector length {v.size}")
        if self.defect < 0:
            raise ValueError("defect must be >= 0")
        object.__setattr__(self, "support", (first, last))

    @property
    def support_first(self) -> int:
        return self.support[0]

    @property
    def length(self) -> int:
        return int(self.vector.size)

    @property
    def spectral_distance_bound(self) -> float:
        """dist(E, spectrum) is at most the defect."""
        return self.defect

    @property
    def resolvent_norm_lower_bound(self) -> float:
        return math.inf if self.defect == 0 else 1.0 / self.defect

    def as_site_vector(self) -> SiteVector:
        return SiteVector(self.support[0], self.vector)

    def shifted(self, m: int) -> "WeylWitness":
        """The same witness for shift(src, m): support moves by -m."""
        return WeylWitness((self.support[0] - m, self.support[1] - m), self.vector,
                           self.defect, self.energy)

    def to_dict(self) -> Dict[str, Any]:
        return {"energy": self.energy, "support_first": self.support[0],
                "vector": self.vector.tolist(), "defect": self.defect}


class SupportSearchResult(NamedTuple):
    length: int
    witness: WeylWitness
    intervals_tested: int


# ----------------------------------------------------------------------
# Eigenvalues
# ----------------------------------------------------------------------

def sturm_counts(diagonal: np.ndarray, shifts) -> np.ndarray:
    """
    Number of eigenvalues below each shift, for the tridiagonal matrix with
    the given diagonal and unit off-diagonals (negative LDL^T pivots).
    """
    a = np.asarray(diagonal, dtype=float)
    x = np.asarray(shifts, dtype=float)
    count = np.zeros(x.shape, dtype=np.int64)
    d = np.ones(x.shape)
    for i, ai in enumerate(a):
        d = (ai - x) if i == 0 else (ai - x) - 1.0 / d
        d = np.where(d == 0.0, _ZERO_PIVOT, d)
        count += d < 0.0
    return count


def eigenvalues(sec: FiniteSection, E_shift: float = 0.0) -> np.ndarray:
    """All eigenvalues of the section minus ``E_shift``, ascending."""
    a = sec.diagonal - E_shift
    n = a.size
    lo = np.full(n, float(a.min()) - 2.0)
    hi = np.full(n, float(a.max()) + 2.0)
    index = np.arange(n)
    for _ in range(_MAX_BISECTIONS):
        if np.max(hi - lo) <= EIG_TOL:
            break
        mid = 0.5 * (lo + hi)
        above = sturm_counts(a, mid) > index
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# Weyl defects
# ----------------------------------------------------------------------

def weyl_defect(src: PotentialSource, E: float, vector: SiteVector) -> float:
    """||(H_v - E) u|| over the support expanded by one site on each side."""
    first, last = vector.first_index - 1, vector.last_index + 1
    u = np.concatenate([[0.0], vector.values, [0.0]])
    x = src.block(first, last) - E
    image = x * u
    image[:-1] += u[1:]
    image[1:] += u[:-1]
    return float(np.linalg.norm(image))


def _normal_band(x: np.ndarray) -> np.ndarray:
    """Upper banded form of M^T M = T^2 + e_1 e_1^T + e_L e_L^T, T = tridiag(1, x, 1)."""
    L = x.size
    ab = np.zeros((3, L))
    ab[2] = x * x + 2.0
    ab[1, 1:] = x[:-1] + x[1:]
    ab[0, 2:] = 1.0
    return ab


def _positive_definite(ab: np.ndarray, mu: float) -> bool:
    shifted = ab.copy()
    shifted[2] -= mu
    try:
        cholesky_banded(shifted, lower=False)
    except LinAlgError:
        return False
    return True


def _smallest_eigenpair(ab: np.ndarray, upper: float) -> Tuple[float, np.ndarray]:
    """Bottom eigenpair of the banded matrix, known to lie below ``upper``."""
    lo, hi = 0.0, upper
    tol = max(EIG_TOL * max(upper, 1.0), 1e-15)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _positive_definite(ab, mid):
            lo = mid
        else:
            hi = mid
    shifted = ab.copy()
    shifted[2] -= lo - tol
    vec = np.random.default_rng(0).standard_normal(ab.shape[1])
    for _ in range(_INVERSE_ITERATIONS):
        vec = solveh_banded(shifted, vec, lower=False)
        vec /= np.linalg.norm(vec)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return 0.5 * (lo + hi), vec


def min_support_length(src: PotentialSource, E: float, eps: float, L_max: int,
                       center_range: Sequence[int] = (0, 0)) -> SupportSearchResult:
    """
    Smallest L <= L_max with an interval of length L, centered in
    ``center_range``, that carries a unit vector of defect < eps.

    Centers are visited at stride max(1, L // 4). At the first qualifying L
    the best interval among the visited centers is returned.
    """
    if eps <= 0 or L_max < 1:
        raise ValueError("need eps > 0 and L_max >= 1")
    c_lo, c_hi = int(center_range[0]), int(center_range[1])
    eps2 = eps * eps
    tested = 0
    for L in range(1, L_max + 1):
        best: Optional[WeylWitness] = None
        for c in range(c_lo, c_hi + 1, max(1, L // 4)):
            first = c - L // 2
            ab = _normal_band(src.block(first, first + L - 1) - E)
            tested += 1
            if _positive_definite(ab, eps2):
                continue
            _, vec = _smallest_eigenpair(ab, eps2)
            sv = SiteVector(first, vec)
            witness = WeylWitness((first, first + L - 1), vec, weyl_defect(src, E, sv), float(E))
            if witness.defect < eps and (best is None or witness.defect < best.defect):
                best = witness
        if best is not None:
            _logger.debug(f"support search E={E!r} eps={eps!r}: L={L} defect={best.defect:.4g}")
            return SupportSearchResult(L, best, tested)
    raise SupportNotFoundError(
        f"no unit vector with defect < {eps!r} supported on length <= {L_max} "
        f"(E={E!r}, centers {c_lo}..{c_hi})"
    )


def approx_eigenvector_from_bounded_solution(u_inf: SiteVector, src: PotentialSource,
                                             E: float) -> WeylWitness:
    """
    Truncate a solution on [-L-1, L+1] to [-L, L] and normalize. The defect
    comes only from the four boundary terms.
    """
    L = u_inf.last_index - 1
    if u_inf.first_index != -L - 1 or L < 0:
        raise ValueError(f"expected a range [-L-1, L+1], got [{u_inf.first_index}, {u_inf.last_index}]")
    truncated = u_inf.restrict(-L, L)
    norm = truncated.norm()
    if norm < DEGENERATE_NORM:
        raise DegenerateNormError(f"truncated solution has norm {norm:.3e} < {DEGENERATE_NORM}")
    unit = SiteVector(-L, truncated.values / norm)
    defect = weyl_defect(src, E, unit)
    edges = abs(u_inf.at(-L)) + abs(u_inf.at(-L - 1)) + abs(u_inf.at(L)) + abs(u_inf.at(L + 1))
    bound = 2.0 * edges / norm
    if defect > bound * (1.0 + 1e-9) + 1e-12:
        _logger.warning(f"defect {defect:.4g} exceeds boundary bound {bound:.4g}; input is not a solution at E={E!r}")
    return WeylWitness((-L, L), unit.values, defect, float(E))
