"""
Green's function of H_v - E at a certified energy.

The unstable solution u^u (decaying to the left) is shot forward from the
left edge of the window and the stable solution u^s (decaying to the right)
backward from the right edge, each starting in the certified direction.
After normalizing the Wronskian to 1 at site 0,

    G(p, q) = u^u(min(p, q)) u^s(max(p, q)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .artifacts import write_csv, write_json
from .cocycle import OVERFLOW_LIMIT, PotentialSource, SiteVector, wronskians
from .errors import (DegenerateDirectionsError, NonDecayingKernelError,
                     SolutionOverflowError, WindowCoverageError)
from .uhdetect import UHCertificate

_logger = logging.getLogger(__name__)

ENERGY_MATCH_TOL = 1e-12
DIRECTION_TOL = 1e-8
_RESCALE_AT = 1e250


@dataclass(frozen=True)
class GreenKernel:
    energy: float
    window: Tuple[int, int]
    u_unstable: SiteVector
    u_stable: SiteVector
    matrix: np.ndarray
    decay_rate: float
    decay_const: float
    fit_residual: float
    wronskian_drift: float
    wronskian: float = 1.0
    certificate_lambda: Optional[float] = None

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def value(self, p: int, q: int) -> float:
        a = self.window[0]
        return float(self.matrix[p - a, q - a])

    @property
    def decay_vs_growth(self) -> Optional[float]:
        if self.certificate_lambda is None:
            return None
        return self.decay_rate * self.certificate_lambda

    def header(self) -> Dict[str, Any]:
        return {"energy": self.energy, "decay_rate": self.decay_rate, "decay_const": self.decay_const,
                "wronskian_drift": self.wronskian_drift, "fit_residual": self.fit_residual,
                "window": list(self.window), "decay_vs_growth": self.decay_vs_growth}


# ----------------------------------------------------------------------
# Shooting
# ----------------------------------------------------------------------

def _shoot(x: np.ndarray, start: Tuple[float, float], forward: bool, zero: int) -> np.ndarray:
    """
    Three-term recurrence over the window; ``x[i]`` is E - v at window index i.

    Forward shots start from (u[1], u[0]), backward shots from
    (u[n-1], u[n-2]). Until the pair (u[zero], u[zero-1]) is known the
    computed part is rescaled whenever it passes 1e250; that pair is then
    made a unit vector.
    """
    n = x.size
    u = np.zeros(n)
    if forward:
        u[1], u[0] = start
        order, ready = range(1, n - 1), zero
    else:
        u[n - 1], u[n - 2] = start
        order, ready = range(n - 2, 0, -1), zero - 1
    normalized = (forward and zero == 1) or (not forward and zero == n - 1)
    for i in order:
        j, prev = (i + 1, i - 1) if forward else (i - 1, i + 1)
        u[j] = x[i] * u[i] - u[prev]
        if normalized:
            if abs(u[j]) > OVERFLOW_LIMIT:
                raise SolutionOverflowError(f"shot solution exceeded {OVERFLOW_LIMIT:g} at window index {j}")
            continue
        if abs(u[j]) > _RESCALE_AT:
            lo, hi = (0, j + 1) if forward else (j, n)
            u[lo:hi] /= abs(u[j])
        if j == ready:
            u /= math.hypot(u[zero], u[zero - 1])
            normalized = True
    return u


def _fit_decay(matrix: np.ndarray) -> Tuple[float, float, float]:
    """(decay rate, decay constant, max log10 residual) from diagonal maxima."""
    n = matrix.shape[0]
    lo, hi = n // 4, n - n // 4
    middle = np.abs(matrix[lo:hi, lo:hi])
    d = np.arange(middle.shape[0])
    peaks = np.array([np.max(np.diagonal(middle, k)) for k in d])
    keep = peaks > 0
    if keep.sum() < 2:
        raise NonDecayingKernelError("kernel has fewer than two nonzero diagonals to fit")
    slope, intercept = np.polyfit(d[keep], np.log(peaks[keep]), 1)
    residual = float(np.max(np.abs(np.log(peaks[keep]) - (intercept + slope * d[keep])))) / math.log(10.0)
    rate = math.exp(slope)
    if rate >= 1.0:
        raise NonDecayingKernelError(f"fitted decay rate {rate:.6g} >= 1")

    full = np.abs(matrix)
    all_peaks = np.array([np.max(np.diagonal(full, k)) for k in range(n)])
    nz = all_peaks > 0
    log_const = np.max(np.log(all_peaks[nz]) - np.arange(n)[nz] * slope)
    return rate, float(math.exp(log_const)), residual


def build_kernel(src: PotentialSource, E: float, cert: UHCertificate,
                 window: Sequence[int]) -> GreenKernel:
    a, b = int(window[0]), int(window[1])
    if abs(E - cert.energy) > ENERGY_MATCH_TOL:
        raise ValueError(f"energy {E!r} does not match certificate energy {cert.energy!r}")
    if not (a <= -1 and b >= 0):
        raise ValueError(f"kernel window [{a}, {b}] must contain -1 and 0")
    if cert.window[0] > a - cert.depth or cert.window[1] < b + cert.depth:
        raise WindowCoverageError(
            f"certificate window {list(cert.window)} does not cover [{a}, {b}] "
            f"with margin {cert.depth}")

    u0, s0 = cert.section_at(0)
    if u0.distance(s0) < DIRECTION_TOL:
        raise DegenerateDirectionsError(
            f"unstable and stable directions at 0 are {u0.distance(s0):.3e} apart")

    x = E - src.block(a, b)
    zero = -a
    u_dir, _ = cert.section_at(a + 1)
    _, s_dir = cert.section_at(b)
    uu = _shoot(x, (math.cos(u_dir.angle), math.sin(u_dir.angle)), True, zero)
    us = _shoot(x, (math.cos(s_dir.angle), math.sin(s_dir.angle)), False, zero)

    w0 = us[zero] * uu[zero - 1] - uu[zero] * us[zero - 1]
    if abs(w0) < DIRECTION_TOL:
        raise DegenerateDirectionsError(f"Wronskian at 0 is {w0:.3e}")
    uu = uu / w0
    u_unstable, u_stable = SiteVector(a, uu), SiteVector(a, us)
    drift = float(np.max(np.abs(wronskians(u_stable, u_unstable) - 1.0)))

    with np.errstate(over="ignore", invalid="ignore"):
        outer = np.outer(uu, us)
    matrix = np.triu(outer) + np.triu(outer, 1).T
    rate, const, residual = _fit_decay(matrix)

    kernel = GreenKernel(energy=float(E), window=(a, b), u_unstable=u_unstable, u_stable=u_stable,
                         matrix=matrix, decay_rate=rate, decay_const=const, fit_residual=residual,
                         wronskian_drift=drift, certificate_lambda=cert.lambda_)
    _logger.info(f"kernel E={E!r} on [{a}, {b}]: rate={rate:.6g} C={const:.4g} drift={drift:.2e}")
    return kernel


# ----------------------------------------------------------------------
# Using the kernel
# ----------------------------------------------------------------------

def apply(kernel: GreenKernel, u: SiteVector) -> SiteVector:
    """(S u)_n = sum_p G(p, n) u_p over the window."""
    a, b = kernel.window
    if u.first_index < a + 1 or u.last_index > b - 1:
        raise ValueError(f"support [{u.first_index}, {u.last_index}] must lie inside ({a}, {b})")
    lo = u.first_index - a
    columns = kernel.matrix[lo:lo + len(u)]
    return SiteVector(a, u.values @ columns)


def _apply_operator(src: PotentialSource, E: float, w: SiteVector) -> np.ndarray:
    """(H_v - E) w at the interior sites of w's range."""
    x = src.block(w.first_index + 1, w.last_index - 1) - E
    v = w.values
    return v[2:] + v[:-2] + x * v[1:-1]


def verify_inverse(src: PotentialSource, E: float, kernel: GreenKernel, trials: int,
                   seed: int = 0) -> float:
    """Max ||(H_v - E) S u - u|| over random unit u on the middle third."""
    a, b = kernel.window
    n = b - a + 1
    lo, hi = n // 3, 2 * n // 3
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        values = rng.standard_normal(hi - lo)
        values /= np.linalg.norm(values)
        su = apply(kernel, SiteVector(a + lo, values))
        image = _apply_operator(src, E, su)  # indices 1..n-2 of the window
        residual = image[lo - 1:hi - 1] - values
        worst = max(worst, float(np.linalg.norm(residual)))
    return worst


def operator_norm_bound(kernel: GreenKernel) -> float:
    return float(np.max(np.sum(np.abs(kernel.matrix), axis=0))) if kernel.matrix.size else 0.0


def export_kernel(kernel: GreenKernel, prefix, radius: int,
                  extra: Optional[Dict[str, Any]] = None) -> Tuple[str, str]:
    """Write <prefix>.csv with (p, q, G) for |p - q| <= radius and <prefix>.json."""
    a = kernel.window[0]
    n = kernel.matrix.shape[0]
    rows = []
    for i in range(n):
        for j in range(max(0, i - radius), min(n, i + radius + 1)):
            rows.append((a + i, a + j, kernel.matrix[i, j]))
    csv_path = write_csv(f"{prefix}.csv", ("p", "q", "G"), rows)
    json_path = write_json(f"{prefix}.json", {**(extra or {}), **kernel.header(), "radius": radius})
    return str(csv_path), str(json_path)
