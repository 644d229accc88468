"""
Uniform hyperbolicity on a finite window.

``certify`` either returns a ``UHCertificate`` (growth constants, sections,
gap, cone check) or a ``FailureReport`` naming the first check that failed.
``bounded_witness_search`` is the opposite test: it looks for a direction
whose orbit stays small in both time directions.

All work is done on ``ProductTable`` rows, vectorized over base sites.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .cocycle import PotentialSource, ProductTable, product_table, scaled_log_norms
from .errors import DirectionsUndefinedError
from .sl2core import TOL_ROT, ProjPoint, angular_distance, symmetric_eigen

_logger = logging.getLogger(__name__)

TOL_GROWTH = 1e-3
INV_TOL = 1e-6
GAP_TOL = 1e-8
WITNESS_POLY_BOUND = 4.0
ESCAPE_MARGIN = 0.25
ANGLE_GRID = 1024
SCREEN_GRID = 64
SCREEN_KEEP = 8
MAX_WITNESS_SITES = 256
REFINE_XATOL = 1e-10

FAILURE_REASONS = ("growth", "directions_undefined", "gap", "invariance", "cone")

_LOG_ROT = math.log1p(TOL_ROT)


# ----------------------------------------------------------------------
# Result types
# ----------------------------------------------------------------------

class Sections(NamedTuple):
    u: ProjPoint
    s: ProjPoint
    cauchy_residual: float


@dataclass(frozen=True)
class GrowthFit:
    """log ||A_n(k)|| >= log c + n log lambda over the sampled window."""

    lambda_: float
    c_const: float
    passed: bool
    resolved: bool
    log_lambda: float
    log_c: float
    depth: int
    window: Tuple[int, int]

    def to_dict(self) -> Dict[str, Any]:
        return {"lambda": self.lambda_, "c_const": self.c_const, "pass": self.passed,
                "resolved": self.resolved, "depth": self.depth, "window": list(self.window)}


@dataclass(frozen=True)
class FailureReport:
    reason: str
    first_violation_site: int
    details: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.reason!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {"reason": self.reason, "first_violation_site": int(self.first_violation_site),
                "details": dict(self.details)}


@dataclass(frozen=True)
class UHCertificate:
    """
    Measured uniform-hyperbolicity data on ``window`` at energy ``energy``.

    ``u_angles``/``s_angles`` hold the sections at every window site, in
    order. ``contraction_const`` is the measured C with
    ||A_n(k) s(k)|| <= C lambda^-n for n <= depth and k + n in the window,
    and ``backward_contraction_const`` the same for A_{-n}(k) u(k).
    """

    energy: float
    window: Tuple[int, int]
    depth: int
    lambda_: float
    c_const: float
    gap_gamma: float
    beta: float
    log_beta: float
    cone_ok: bool
    u_angles: np.ndarray
    s_angles: np.ndarray
    contraction_const: float
    backward_contraction_const: float
    max_cauchy_residual: float
    max_invariance_error: float
    escape_log_norm: float
    blocked_lambda: Optional[float] = None

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    @property
    def sections(self) -> List[Tuple[ProjPoint, ProjPoint]]:
        return [(ProjPoint(u), ProjPoint(s)) for u, s in zip(self.u_angles, self.s_angles)]

    def section_at(self, k: int) -> Tuple[ProjPoint, ProjPoint]:
        if not self.window[0] <= k <= self.window[1]:
            raise IndexError(f"site {k} outside certified window {self.window}")
        i = k - self.window[0]
        return ProjPoint(self.u_angles[i]), ProjPoint(self.s_angles[i])

    def to_dict(self, include_sections: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "energy": self.energy, "window": list(self.window), "depth": self.depth,
            "lambda": self.lambda_, "c_const": self.c_const, "gap_gamma": self.gap_gamma,
            "beta": self.beta, "log_beta": self.log_beta, "cone_ok": self.cone_ok,
            "contraction_const": self.contraction_const,
            "backward_contraction_const": self.backward_contraction_const,
            "max_cauchy_residual": self.max_cauchy_residual,
            "max_invariance_error": self.max_invariance_error,
            "escape_log_norm": self.escape_log_norm,
            "blocked_lambda": self.blocked_lambda,
        }
        if include_sections:
            data["sections"] = {"u": self.u_angles.tolist(), "s": self.s_angles.tolist()}
        return data


@dataclass(frozen=True)
class BoundedWitness:
    site: int
    direction: ProjPoint
    max_log_norm: float
    depth: int
    orbit_log_norms: np.ndarray  # n = -depth .. depth

    def to_dict(self) -> Dict[str, Any]:
        return {"site": self.site, "direction": self.direction.angle,
                "max_log_norm": self.max_log_norm, "depth": self.depth,
                "orbit_log_norms": self.orbit_log_norms.tolist()}


@dataclass(frozen=True)
class SectionConvergence:
    depths: Tuple[int, ...]
    residuals: Tuple[float, ...]
    rate: Optional[float]  # fitted residual ratio per unit depth


@dataclass(frozen=True)
class BlockedGrowth:
    first_site: int
    depth: int
    block_log_growth: np.ndarray
    alpha: float
    lambda0: float


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------

def _window_sites(window: Sequence[int]) -> np.ndarray:
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValueError(f"empty window [{lo}, {hi}]")
    return np.arange(lo, hi + 1)


def _lower_hull(x: np.ndarray, y: np.ndarray) -> List[int]:
    hull: List[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _envelope_fit(profile: np.ndarray) -> Tuple[float, float]:
    """
    (log lambda, log c) for the worst-case profile w(n), n = 1..len.

    log lambda is the slope of the lower convex envelope of the tail
    n >= len/2, read on the segment that covers n = 3 len/4. log c is then
    the largest intercept that keeps the line under every point of the whole
    profile.
    """
    depth = profile.size
    n = np.arange(1, depth + 1, dtype=float)
    if depth == 1:
        return float(profile[0]), 0.0
    first = depth // 2 - 1 if depth >= 4 else 0
    tail_n, tail_w = n[first:], profile[first:]
    hull = _lower_hull(tail_n, tail_w)
    anchor = 0.75 * depth
    slope = 0.0
    for a, b in zip(hull[:-1], hull[1:]):
        if tail_n[a] <= anchor <= tail_n[b]:
            slope = (tail_w[b] - tail_w[a]) / (tail_n[b] - tail_n[a])
            break
    log_c = float(np.min(profile - n * slope))
    return float(slope), log_c


def cone_condition(gamma: float, log_beta: float) -> bool:
    """tan(gamma/2) > 2 / (beta - 1/beta), evaluated without forming beta."""
    if log_beta <= 0.0:
        return False
    with np.errstate(over="ignore"):
        rhs = 1.0 / float(np.sinh(log_beta))
    return math.tan(gamma / 2.0) > rhs


def _refine_angle(objective, theta0: float, half_width: float) -> Tuple[float, float]:
    res = minimize_scalar(objective, bounds=(theta0 - half_width, theta0 + half_width),
                          method="bounded", options={"xatol": REFINE_XATOL})
    best = (float(res.x), float(res.fun))
    f0 = float(objective(theta0))
    return best if best[1] <= f0 else (theta0, f0)


def _angle_grid(size: int) -> np.ndarray:
    return np.arange(size) * (math.pi / size)


def _orbit_grid(fwd: ProductTable, bwd: ProductTable, rows, columns, angles) -> np.ndarray:
    """
    max over rows (both time directions) of log ||A v|| on a grid of angles,
    shape (len(columns), len(angles)).

    Read off the quadratic forms, so only good for ranking: entries out of
    float range count as +inf and values near a contracting direction lose
    relative precision.
    """
    c2, s2 = np.cos(2.0 * angles), np.sin(2.0 * angles)
    best = None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for table in (fwd, bwd):
            p, q, r = (part[rows][:, columns, None] for part in table.quadratic_forms)
            values = p + q * c2 + r * s2
            values = np.where(np.isfinite(values), values, np.inf).max(axis=0)
            best = values if best is None else np.maximum(best, values)
        return 0.5 * np.log(best)


def _column_objective(fwd: ProductTable, bwd: ProductTable, rows, column: int):
    """Exact theta -> max_n log ||A_n v|| along one column, both time directions."""
    f = [part[rows, column] for part in (*fwd.scaling, fwd.shear)]
    b = [part[rows, column] for part in (*bwd.scaling, bwd.shear)]
    scale, alpha, beta, shear = (np.concatenate(pair) for pair in zip(f, b))

    def objective(theta):
        x, y = math.cos(theta), math.sin(theta)
        return float(np.max(scaled_log_norms(scale, alpha, beta, shear, x, y)))

    return objective


def _minmax_search(fwd: ProductTable, bwd: ProductTable, rows, columns, angle_grid: int,
                   screen_grid: int, screen_keep: int) -> Tuple[int, float, float]:
    """(column, angle, value) minimizing the orbit maximum over columns and angles."""
    columns = np.asarray(columns)
    if screen_grid < angle_grid and columns.size > screen_keep:
        coarse = _orbit_grid(fwd, bwd, rows, columns, _angle_grid(screen_grid)).min(axis=1)
        columns = np.sort(columns[np.argsort(coarse, kind="stable")[:screen_keep]])

    angles = _angle_grid(angle_grid)
    values = _orbit_grid(fwd, bwd, rows, columns, angles)
    best_col, best_theta, best_val = -1, 0.0, math.inf
    for i in np.argsort(values.min(axis=1), kind="stable")[:screen_keep]:
        col = int(columns[i])
        j = int(np.argmin(values[i]))
        objective = _column_objective(fwd, bwd, rows, col)
        theta, val = _refine_angle(objective, float(angles[j]), math.pi / angle_grid)
        if val < best_val:
            best_col, best_theta, best_val = col, theta, val
    return best_col, best_theta, best_val


def _escape_minimum(fwd: ProductTable, bwd: ProductTable, row: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per column, the exact min over directions v of
    max(log ||A_row v||, log ||A_-row v||) and a direction attaining it.

    Both squared norms are of the form p + q cos 2a + r sin 2a, so the
    minimum of the larger one sits at one of the two contracting directions
    or where the two curves cross. The crossings are the isotropic
    directions of the difference of the two Gram matrices.
    """
    candidates = [np.asarray(fwd.singular_angles()[1][row], dtype=float),
                  np.asarray(bwd.singular_angles()[1][row], dtype=float)]

    f_scale, f_alpha, f_beta = (part[row] for part in fwd.scaling)
    b_scale, b_alpha, b_beta = (part[row] for part in bwd.scaling)
    f_shear, b_shear = fwd.shear[row], bwd.shear[row]
    top = np.maximum(f_scale, b_scale)
    kf, kb = np.exp(2.0 * (f_scale - top)), np.exp(2.0 * (b_scale - top))
    fa, ba = f_alpha * f_shear, b_alpha * b_shear
    d11 = kf * f_alpha ** 2 - kb * b_alpha ** 2
    d12 = kf * f_alpha * fa - kb * b_alpha * ba
    d22 = kf * (fa ** 2 + f_beta ** 2) - kb * (ba ** 2 + b_beta ** 2)
    mu1, phi = symmetric_eigen(d11, d12, d22)
    mu2 = d11 + d22 - mu1
    crossing = (mu1 >= 0.0) & (mu2 <= 0.0)
    psi = np.arctan2(np.sqrt(np.maximum(mu1, 0.0)), np.sqrt(np.maximum(-mu2, 0.0)))
    for sign in (1.0, -1.0):
        candidates.append(np.where(crossing, phi + sign * psi, candidates[0]))

    angles = np.stack(candidates)
    x, y = np.cos(angles), np.sin(angles)
    values = np.maximum(scaled_log_norms(f_scale, f_alpha, f_beta, f_shear, x, y),
                        scaled_log_norms(b_scale, b_alpha, b_beta, b_shear, x, y))
    pick = np.argmin(values, axis=0)
    cols = np.arange(values.shape[1])
    return values[pick, cols], angles[pick, cols]


def _check_tables(tables: Tuple[ProductTable, ProductTable], sites: np.ndarray, depth: int) -> None:
    for table, sign in zip(tables, (1, -1)):
        if table.sign != sign or table.depth != depth or not np.array_equal(table.sites, sites):
            raise ValueError(
                f"product table (sign {table.sign}, depth {table.depth}, {table.sites.size} sites) "
                f"does not match window [{sites[0]}, {sites[-1]}] at depth {depth}")


def _undefined(log_norms: np.ndarray) -> np.ndarray:
    return log_norms < _LOG_ROT


# ----------------------------------------------------------------------
# Sections
# ----------------------------------------------------------------------

def estimate_sections(src: PotentialSource, E: float, k: int, depth: int) -> Sections:
    """
    s = contracting direction of A_depth(k), u = contracting direction of
    A_-depth(k), with the Cauchy residual against depth - 1.
    """
    if depth < 2:
        raise ValueError("depth must be >= 2")
    fwd = product_table(src, E, [k], depth)
    bwd = product_table(src, E, [k], depth, backward=True)
    f_norm, f_contract, _ = fwd.singular_angles()
    b_norm, b_contract, _ = bwd.singular_angles()
    rows = [depth - 1, depth]
    if _undefined(f_norm[rows, 0]).any() or _undefined(b_norm[rows, 0]).any():
        raise DirectionsUndefinedError(
            f"products at E={E!r}, k={k} have norm within {TOL_ROT} of 1; sections undefined")
    residual = max(angular_distance(f_contract[depth, 0], f_contract[depth - 1, 0]),
                   angular_distance(b_contract[depth, 0], b_contract[depth - 1, 0]))
    return Sections(u=ProjPoint(b_contract[depth, 0]), s=ProjPoint(f_contract[depth, 0]),
                    cauchy_residual=float(residual))


def section_convergence(src: PotentialSource, E: float, k: int,
                        depths: Sequence[int]) -> SectionConvergence:
    """Cauchy residuals at several depths and their fitted geometric rate."""
    depths = tuple(sorted(int(d) for d in depths))
    residuals = tuple(estimate_sections(src, E, k, d).cauchy_residual for d in depths)
    usable = [(d, r) for d, r in zip(depths, residuals) if r > 1e-14]
    rate = None
    if len(usable) >= 2:
        d, r = np.array(usable, dtype=float).T
        slope = np.polyfit(d, np.log(r), 1)[0]
        rate = float(np.exp(slope))
    return SectionConvergence(depths=depths, residuals=residuals, rate=rate)


# ----------------------------------------------------------------------
# Growth and certification
# ----------------------------------------------------------------------

def _fit_from_table(fwd: ProductTable, window: Tuple[int, int],
                    tol_growth: float, witness_poly_bound: float) -> Tuple[GrowthFit, np.ndarray]:
    depth = fwd.depth
    log_norms = fwd.log_norms()
    profile = log_norms[1:].min(axis=1)
    log_lambda, log_c = _envelope_fit(profile)
    resolved = log_c + depth * log_lambda >= math.log(witness_poly_bound * depth)
    lam = math.exp(log_lambda)
    fit = GrowthFit(lambda_=lam, c_const=math.exp(log_c), passed=bool(lam > 1.0 + tol_growth and resolved),
                    resolved=bool(resolved), log_lambda=log_lambda, log_c=log_c,
                    depth=depth, window=window)
    return fit, log_norms


def growth_test(src: PotentialSource, E: float, window: Sequence[int], depth: int,
                tol_growth: float = TOL_GROWTH,
                witness_poly_bound: float = WITNESS_POLY_BOUND) -> GrowthFit:
    if depth < 8:
        raise ValueError("depth must be >= 8")
    sites = _window_sites(window)
    fwd = product_table(src, E, sites, depth)
    fit, _ = _fit_from_table(fwd, (int(sites[0]), int(sites[-1])), tol_growth, witness_poly_bound)
    _logger.debug(f"growth E={E!r}: lambda={fit.lambda_:.6g} c={fit.c_const:.3g} pass={fit.passed}")
    return fit


def blocked_growth(src: PotentialSource, E: float, first_site: int, blocks: int,
                   depth: int) -> BlockedGrowth:
    """
    Growth of the accelerated cocycle on blocks of length ``depth``.

    Block j starts at b_j = first_site + j*depth and acts as
    diag(||A_N(b_j)||, ||A_N(b_j)||^-1) R_{pi/2 + u_N(b_j) - s_N(b_j)}, where
    u_N(b_j) is the image direction of the previous block and s_N(b_j) the
    contracting direction of the current one. The vector e1 is pushed
    through the blocks; alpha is the smallest per-block expansion.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    bases = first_site + depth * np.arange(-1, blocks)
    table = product_table(src, E, bases, depth)
    log_norm, contract, expand = table.singular_angles()
    log_sigma = log_norm[depth, 1:]
    theta = math.pi / 2 + expand[depth, :-1] - contract[depth, 1:]

    angle = 0.0
    growth = np.empty(blocks)
    for j in range(blocks):
        a = angle + theta[j]
        c, s = math.cos(a), math.sin(a)
        shrink = math.exp(-2.0 * min(log_sigma[j], 350.0))
        growth[j] = log_sigma[j] + 0.5 * math.log(c * c + shrink * shrink * s * s)
        angle = math.atan2(shrink * s, c)
    log_alpha = float(growth.min())
    return BlockedGrowth(first_site=int(first_site), depth=depth, block_log_growth=growth,
                         alpha=math.exp(log_alpha), lambda0=math.exp(log_alpha / depth))


def certify(src: PotentialSource, E: float, window: Sequence[int], depth: int, *,
            tol_growth: float = TOL_GROWTH,
            inv_tol: float = INV_TOL,
            gap_tol: float = GAP_TOL,
            witness_poly_bound: float = WITNESS_POLY_BOUND,
            escape_margin: float = ESCAPE_MARGIN,
            tables: Optional[Tuple[ProductTable, ProductTable]] = None) -> Union[UHCertificate, FailureReport]:
    """
    Checks run in order: growth (including escape), directions, gap,
    invariance, cone. The first failure is returned as a ``FailureReport``.

    The escape check is the exact min over directions of
    max(log ||A_depth v||, log ||A_-depth v||) at every window site. A
    certificate also needs finite contraction constants; a non-finite one
    is reported as a growth failure. ``tables`` may pass in the forward and
    backward product tables over the window at ``depth``.
    """
    if depth < 8:
        raise ValueError("depth must be >= 8")
    sites = _window_sites(window)
    win = (int(sites[0]), int(sites[-1]))
    if tables is not None:
        _check_tables(tables, sites, depth)
        fwd, bwd = tables
    else:
        fwd, bwd = product_table(src, E, sites, depth), None
    fit, f_norms = _fit_from_table(fwd, win, tol_growth, witness_poly_bound)
    if not fit.passed:
        worst = int(sites[np.argmin(f_norms[depth])])
        return FailureReport("growth", worst, {"check": "growth", **fit.to_dict()})

    if bwd is None:
        bwd = product_table(src, E, sites, depth, backward=True)
    escapes, directions = _escape_minimum(fwd, bwd, depth)
    col = int(np.argmin(escapes))
    escape = float(escapes[col])
    threshold = math.log(witness_poly_bound * depth) + escape_margin
    if escape <= threshold:
        return FailureReport("growth", int(sites[col]),
                             {"check": "escape", "escape_log_norm": escape, "threshold": threshold,
                              "direction": ProjPoint(directions[col]).angle, **fit.to_dict()})

    f_norms, f_contract, _ = fwd.singular_angles()
    b_norms, b_contract, _ = bwd.singular_angles()
    rows = [depth - 1, depth]
    undefined = _undefined(f_norms[rows]).any(axis=0) | _undefined(b_norms[rows]).any(axis=0)
    if undefined.any():
        return FailureReport("directions_undefined", int(sites[np.argmax(undefined)]),
                             {"depth": depth})

    s_angles = np.mod(f_contract[depth], math.pi)
    u_angles = np.mod(b_contract[depth], math.pi)
    cauchy = np.maximum(angular_distance(f_contract[depth], f_contract[depth - 1]),
                        angular_distance(b_contract[depth], b_contract[depth - 1]))

    gaps = angular_distance(u_angles, s_angles)
    gamma = float(gaps.min())
    if gamma <= gap_tol:
        return FailureReport("gap", int(sites[np.argmin(gaps)]), {"gap_gamma": gamma, "gap_tol": gap_tol})

    x_all = E - src.samples(sites)
    if sites.size > 1:
        x = x_all[:-1]
        inv_u = _invariance_errors(x, u_angles[:-1], u_angles[1:])
        inv_s = _invariance_errors(x, s_angles[:-1], s_angles[1:])
        inv = np.maximum(inv_u, inv_s)
        max_inv = float(inv.max())
        if max_inv > inv_tol:
            i = int(np.argmax(inv > inv_tol))
            return FailureReport("invariance", int(sites[i]),
                                 {"unstable_error": float(inv_u[i]), "stable_error": float(inv_s[i]),
                                  "inv_tol": inv_tol})
    else:
        max_inv = 0.0

    log_beta = float(f_norms[depth].min())
    if not cone_condition(gamma, log_beta):
        return FailureReport("cone", int(sites[np.argmin(f_norms[depth])]),
                             {"gap_gamma": gamma, "log_beta": log_beta})

    contraction, backward_contraction = _contraction_consts(x_all, u_angles, s_angles, depth, fit.log_lambda)
    if not (math.isfinite(contraction) and math.isfinite(backward_contraction)):
        return FailureReport("growth", win[0],
                             {"check": "contraction", "contraction_const": contraction,
                              "backward_contraction_const": backward_contraction, **fit.to_dict()})
    with np.errstate(over="ignore"):
        beta = float(np.exp(log_beta))

    blocks = sites.size // depth
    blocked_lambda = blocked_growth(src, E, win[0], blocks, depth).lambda0 if blocks >= 1 else None

    cert = UHCertificate(
        energy=float(E), window=win, depth=depth, lambda_=fit.lambda_, c_const=fit.c_const,
        gap_gamma=gamma, beta=beta, log_beta=log_beta, cone_ok=True,
        u_angles=u_angles, s_angles=s_angles,
        contraction_const=contraction, backward_contraction_const=backward_contraction,
        max_cauchy_residual=float(cauchy.max()), max_invariance_error=max_inv,
        escape_log_norm=escape, blocked_lambda=blocked_lambda,
    )
    _logger.debug(f"certified E={E!r}: lambda={cert.lambda_:.6g} gamma={gamma:.4g} beta={beta:.4g}")
    return cert


def _step_log_norms(x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """log ||A(k) (cos a, sin a)|| for one transfer step."""
    c, s = np.cos(angles), np.sin(angles)
    return 0.5 * np.log((x * c - s) ** 2 + c * c)


def _contraction_consts(x: np.ndarray, u_angles: np.ndarray, s_angles: np.ndarray,
                        depth: int, log_lambda: float) -> Tuple[float, float]:
    """
    Measured C in ||A_n(k) s(k)|| <= C lambda^-n and ||A_-n(k) u(k)|| <= C lambda^-n.

    Norms along the sections are accumulated one step at a time through the
    invariant directions, over the pairs (k, n) with k +- n inside the window.
    """
    S = np.concatenate([[0.0], np.cumsum(_step_log_norms(x[:-1], s_angles[:-1]))])
    U = np.concatenate([[0.0], np.cumsum(_step_log_norms(x[:-1], u_angles[:-1]))])
    fwd, bwd = 0.0, 0.0
    for n in range(1, min(depth, x.size - 1) + 1):
        fwd = max(fwd, float(np.max(S[n:] - S[:-n])) + n * log_lambda)
        bwd = max(bwd, float(np.max(U[:-n] - U[n:])) + n * log_lambda)
    with np.errstate(over="ignore"):
        return float(np.exp(fwd)), float(np.exp(bwd))


def _invariance_errors(x: np.ndarray, angles: np.ndarray, next_angles: np.ndarray) -> np.ndarray:
    # A(k) (cos a, sin a) = (x cos a - sin a, cos a)
    c, s = np.cos(angles), np.sin(angles)
    image = np.arctan2(c, x * c - s)
    return angular_distance(image, next_angles)


# ----------------------------------------------------------------------
# Bounded-orbit witness
# ----------------------------------------------------------------------

def bounded_witness_search(src: PotentialSource, E: float, site_range: Sequence[int], depth: int,
                           angle_grid: int = ANGLE_GRID, *,
                           screen_grid: int = SCREEN_GRID,
                           screen_keep: int = SCREEN_KEEP,
                           tables: Optional[Tuple[ProductTable, ProductTable]] = None) -> BoundedWitness:
    """
    Minimize max_{|n| <= depth} log ||A_n(k) v|| over sampled sites k and
    unit directions v.

    Sites are taken at stride max(1, |range| / 256). All sites are screened
    on ``screen_grid`` angles and the best ``screen_keep`` go through the
    full grid plus bounded refinement. ``tables`` may pass in forward and
    backward product tables over every site of the range; the strided
    columns are read from them.
    """
    if angle_grid < 64:
        raise ValueError("angle_grid must be >= 64")
    lo, hi = int(site_range[0]), int(site_range[1])
    if hi < lo:
        raise ValueError(f"empty site range [{lo}, {hi}]")
    stride = max(1, (hi - lo + 1) // MAX_WITNESS_SITES)
    if tables is not None:
        _check_tables(tables, np.arange(lo, hi + 1), depth)
        fwd, bwd = tables
        columns = np.arange(0, hi - lo + 1, stride)
    else:
        sites = np.arange(lo, hi + 1, stride)
        fwd = product_table(src, E, sites, depth)
        bwd = product_table(src, E, sites, depth, backward=True)
        columns = np.arange(sites.size)
    rows = np.arange(depth + 1)
    col, theta, _ = _minmax_search(fwd, bwd, rows, columns, angle_grid, screen_grid, screen_keep)

    x, y = math.cos(theta), math.sin(theta)
    forward = fwd.row_log_norms(rows, x, y, columns=[col])[:, 0, 0]
    backward = bwd.row_log_norms(rows, x, y, columns=[col])[:, 0, 0]
    orbit = np.concatenate([backward[:0:-1], forward])
    witness = BoundedWitness(site=int(fwd.sites[col]), direction=ProjPoint(theta),
                             max_log_norm=float(orbit.max()), depth=depth, orbit_log_norms=orbit)
    _logger.debug(f"witness E={E!r}: site={witness.site} max_log_norm={witness.max_log_norm:.4g}")
    return witness
