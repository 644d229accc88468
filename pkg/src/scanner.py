"""
Energy scans: label each grid energy resolvent / spectrum / inconclusive,
refine around label changes and assemble bands.

An energy is *resolvent* when the cocycle is certified uniformly hyperbolic
and *spectrum* when some direction has an orbit that stays below
log(witness_poly_bound * depth) in both time directions.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .cocycle import PotentialSource, SiteVector, product_table
from .errors import (ConfigError, ConsistencyViolationError, GridMismatchError,
                     NonDecayingKernelError, NumericalError, PotentialError)
from .green import build_kernel
from .hamiltonian import FiniteSection, WeylWitness, eigenvalues, min_support_length, weyl_defect
from .models import HullSpec
from .uhdetect import FailureReport, UHCertificate, bounded_witness_search, certify

_logger = logging.getLogger(__name__)

LABELS = ("resolvent", "spectrum", "inconclusive")
SPECTRUM_MARGIN = 2.5
_BAND_SLACK = 1e-9


@dataclass
class ScanSettings:
    """Every numerical knob of a classification, with the documented defaults."""

    depth: int = 64
    window: Tuple[int, int] = (-256, 256)
    tol_growth: float = 1e-3
    inv_tol: float = 1e-6
    gap_tol: float = 1e-8
    witness_poly_bound: float = 4.0
    escape_margin: float = 0.25
    angle_grid: int = 1024
    screen_grid: int = 64
    screen_keep: int = 8
    refine_factor: int = 64
    parallelism: int = 1
    green_half_width: Optional[int] = None
    progress: bool = False

    def __post_init__(self):
        self.window = (int(self.window[0]), int(self.window[1]))
        if self.depth < 8:
            raise ConfigError(f"settings.depth: must be >= 8, got {self.depth}")
        if self.window[1] < self.window[0]:
            raise ConfigError(f"settings.window: empty window {list(self.window)}")
        for name in ("tol_growth", "inv_tol", "gap_tol", "escape_margin"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"settings.{name}: must be >= 0")
        if self.witness_poly_bound <= 0:
            raise ConfigError("settings.witness_poly_bound: must be > 0")
        if self.angle_grid < 64:
            raise ConfigError(f"settings.angle_grid: must be >= 64, got {self.angle_grid}")
        if self.screen_grid < 1 or self.screen_keep < 1:
            raise ConfigError("settings.screen_grid/screen_keep: must be >= 1")
        if self.refine_factor < 1 or self.refine_factor & (self.refine_factor - 1):
            raise ConfigError(f"settings.refine_factor: must be a power of two, got {self.refine_factor}")
        if self.parallelism < 1:
            raise ConfigError(f"settings.parallelism: must be >= 1, got {self.parallelism}")
        if self.green_half_width is not None and self.green_half_width < 1:
            raise ConfigError("settings.green_half_width: must be >= 1")

    @property
    def witness_threshold(self) -> float:
        return math.log(self.witness_poly_bound * self.depth)

    def certify_kwargs(self) -> Dict[str, Any]:
        return {"tol_growth": self.tol_growth, "inv_tol": self.inv_tol, "gap_tol": self.gap_tol,
                "witness_poly_bound": self.witness_poly_bound, "escape_margin": self.escape_margin}

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["window"] = list(self.window)
        return data


@dataclass(frozen=True)
class EnergyClassification:
    energy: float
    label: str
    lambda_: Optional[float] = None
    gap_gamma: Optional[float] = None
    witness_log_norm: Optional[float] = None
    decay_rate: Optional[float] = None
    reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"E": self.energy, "label": self.label, "lambda": self.lambda_, "gap": self.gap_gamma,
                "witness_log_norm": self.witness_log_norm, "decay_rate": self.decay_rate,
                "reason": self.reason}

    def csv_row(self) -> Tuple[Any, ...]:
        return (self.energy, self.label, self.lambda_, self.gap_gamma,
                self.witness_log_norm, self.decay_rate)


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    lo_resolution: Optional[float] = None  # distance to the adjacent non-spectrum point
    hi_resolution: Optional[float] = None

    def distance(self, E: float) -> float:
        return max(self.lo - E, E - self.hi, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SpectrumReport:
    energies: np.ndarray
    classifications: List[EnergyClassification]
    bands: List[Band]
    grid: Dict[str, Any]
    settings: Dict[str, Any]
    model: Dict[str, Any] = field(default_factory=dict)

    @property
    def labels(self) -> List[str]:
        return [c.label for c in self.classifications]

    def spectrum_energies(self) -> np.ndarray:
        return np.array([c.energy for c in self.classifications if c.label == "spectrum"])

    def label_at(self, E: float) -> str:
        i = int(np.argmin(np.abs(self.energies - E)))
        return self.classifications[i].label

    def base_labels(self) -> List[str]:
        """Labels at the unrefined grid energies, in grid order."""
        grid = self.grid
        base = grid["start"] + grid["step"] * np.arange(grid["count"])
        return [self.label_at(E) for E in base]

    def csv_rows(self) -> List[Tuple[Any, ...]]:
        return [c.csv_row() for c in self.classifications]

    def to_dict(self) -> Dict[str, Any]:
        return {"grid": dict(self.grid), "settings": dict(self.settings), "model": dict(self.model),
                "bands": [b.to_dict() for b in self.bands],
                "energies": [c.to_dict() for c in self.classifications]}


@dataclass(frozen=True)
class InclusionResult:
    ok: bool
    eps: float
    violations: List[float]
    family: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "eps": self.eps, "family": self.family, "violations": list(self.violations)}


@dataclass(frozen=True)
class WitnessInclusion:
    ok: bool
    eps: float
    omega_witness: WeylWitness
    offset: int
    transported: WeylWitness

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "eps": self.eps, "offset": self.offset,
                "omega_witness": self.omega_witness.to_dict(),
                "transported": self.transported.to_dict()}


# ----------------------------------------------------------------------
# Classification
# ----------------------------------------------------------------------

def _decay_rate(src: PotentialSource, E: float, cert: UHCertificate,
                settings: ScanSettings) -> Optional[float]:
    w = settings.green_half_width
    need = (-w - settings.depth, w + settings.depth)
    if cert.window[0] > need[0] or cert.window[1] < need[1]:
        wider = certify(src, E, need, settings.depth, **settings.certify_kwargs())
        if not isinstance(wider, UHCertificate):
            return None
        cert = wider
    try:
        return build_kernel(src, E, cert, (-w, w)).decay_rate
    except NonDecayingKernelError as e:
        _logger.info(f"no decay fit at E={E!r}: {e}")
        return None


def classify_energy(src: PotentialSource, E: float, settings: ScanSettings) -> EnergyClassification:
    """
    Run both tests at E; both passing is a consistency violation.

    The two tests read the same forward and backward product tables over
    the window.
    """
    sites = np.arange(settings.window[0], settings.window[1] + 1)
    tables = (product_table(src, E, sites, settings.depth),
              product_table(src, E, sites, settings.depth, backward=True))
    outcome = certify(src, E, settings.window, settings.depth, tables=tables, **settings.certify_kwargs())
    witness = bounded_witness_search(src, E, settings.window, settings.depth, settings.angle_grid,
                                     screen_grid=settings.screen_grid, screen_keep=settings.screen_keep,
                                     tables=tables)
    resolvent = isinstance(outcome, UHCertificate)
    spectrum = witness.max_log_norm <= settings.witness_threshold
    if resolvent and spectrum:
        raise ConsistencyViolationError(
            f"E={E!r} is both certified (lambda={outcome.lambda_:.6g}) and has a bounded witness "
            f"(max_log_norm={witness.max_log_norm:.4g} <= {settings.witness_threshold:.4g})")

    if resolvent:
        decay = _decay_rate(src, E, outcome, settings) if settings.green_half_width else None
        return EnergyClassification(E, "resolvent", lambda_=outcome.lambda_, gap_gamma=outcome.gap_gamma,
                                    witness_log_norm=witness.max_log_norm, decay_rate=decay)
    lam = outcome.details.get("lambda") if isinstance(outcome, FailureReport) else None
    label = "spectrum" if spectrum else "inconclusive"
    return EnergyClassification(E, label, lambda_=lam, witness_log_norm=witness.max_log_norm,
                                reason=outcome.reason)


def _classify_safely(src: PotentialSource, E: float, settings: ScanSettings) -> EnergyClassification:
    try:
        return classify_energy(src, E, settings)
    except ConsistencyViolationError:
        raise
    except (NumericalError, PotentialError) as e:
        _logger.warning(f"E={E!r} recorded as inconclusive: {e}")
        return EnergyClassification(E, "inconclusive", reason=f"{type(e).__name__}: {e}")


def _classify_many(src: PotentialSource, energies: Sequence[float], settings: ScanSettings,
                   desc: str) -> List[EnergyClassification]:
    def work(E):
        return _classify_safely(src, float(E), settings)

    if settings.parallelism == 1:
        results = map(work, energies)
        return list(tqdm(results, total=len(energies), desc=desc, disable=not settings.progress))
    with ThreadPoolExecutor(max_workers=settings.parallelism) as pool:
        results = pool.map(work, energies)
        return list(tqdm(results, total=len(energies), desc=desc, disable=not settings.progress))


# ----------------------------------------------------------------------
# Scans
# ----------------------------------------------------------------------

def default_energy_range(src: PotentialSource) -> Tuple[float, float]:
    return (-src.bound - SPECTRUM_MARGIN, src.bound + SPECTRUM_MARGIN)


def _assemble_bands(classes: List[EnergyClassification]) -> List[Band]:
    bands: List[Band] = []
    i, n = 0, len(classes)
    while i < n:
        if classes[i].label != "spectrum":
            i += 1
            continue
        j = i
        while j + 1 < n and classes[j + 1].label == "spectrum":
            j += 1
        lo, hi = classes[i].energy, classes[j].energy
        lo_res = lo - classes[i - 1].energy if i > 0 else None
        hi_res = classes[j + 1].energy - hi if j + 1 < n else None
        bands.append(Band(lo, hi, lo_res, hi_res))
        i = j + 1
    return bands


def _outside_bound(classes: List[EnergyClassification], limit: float) -> List[EnergyClassification]:
    """Spectrum labels with |E| > M + 2 become inconclusive, keeping the measured label in ``reason``."""
    out = []
    for c in classes:
        if c.label == "spectrum" and abs(c.energy) > limit + _BAND_SLACK:
            _logger.info(f"E={c.energy!r}: spectrum label outside [{-limit}, {limit}] recorded as inconclusive")
            c = replace(c, label="inconclusive", reason=f"outside spectrum bound: {c.label}")
        out.append(c)
    return out


def _edge_neighbours(found: Dict[float, EnergyClassification], resolution: float,
                     lo: float, hi: float) -> List[float]:
    """Energies one resolution step outside each resolved label change that are not sampled yet."""
    ordered = np.array(sorted(found))
    tol = resolution * 1e-6
    new = set()
    for a, b in zip(ordered[:-1], ordered[1:]):
        if found[a].label == found[b].label or b - a > resolution + tol:
            continue
        for E in (a - resolution, b + resolution):
            i = int(np.searchsorted(ordered, E))
            near = ordered[max(i - 1, 0):i + 1]
            if lo - tol <= E <= hi + tol and not np.any(np.abs(near - E) <= tol):
                new.add(float(E))
    return sorted(new)


def _mark_edges(classes: List[EnergyClassification], resolution: float) -> List[EnergyClassification]:
    """Both ends of a label change at most ``resolution`` apart become inconclusive."""
    edge = set()
    for i in range(len(classes) - 1):
        a, b = classes[i], classes[i + 1]
        if a.label != b.label and b.energy - a.energy <= resolution * (1.0 + 1e-6):
            edge.update((i, i + 1))
    return [replace(c, label="inconclusive", reason=f"edge: {c.label}")
            if i in edge and c.label != "inconclusive" else c
            for i, c in enumerate(classes)]


def scan(src: PotentialSource, E_range: Optional[Sequence[float]], grid_step: float,
         settings: ScanSettings, model: Optional[Dict[str, Any]] = None) -> SpectrumReport:
    """
    Classify E_range on a uniform grid, then halve every interval whose end
    labels differ, log2(refine_factor) times.

    Spectrum labels outside [-M - 2, M + 2] are recorded as inconclusive as
    they come in. After refinement, energies within grid_step / refine_factor
    of a label change are reported inconclusive, with the measured label kept
    in ``reason``; bands are the maximal runs of what remains labeled spectrum.
    """
    if not grid_step > 0:
        raise ConfigError(f"grid_step: must be > 0, got {grid_step!r}")
    lo, hi = default_energy_range(src) if E_range is None else (float(E_range[0]), float(E_range[1]))
    if hi < lo:
        raise ConfigError(f"energy_range: empty range [{lo}, {hi}]")
    count = int(math.floor((hi - lo) / grid_step + 1e-9)) + 1
    energies = lo + grid_step * np.arange(count)
    limit = src.bound + 2.0
    _logger.info(f"scan {count} energies on [{lo}, {hi}] step {grid_step} ({src.descriptor.get('family')})")

    found = dict(zip(energies.tolist(),
                     _outside_bound(_classify_many(src, energies, settings, "scan"), limit)))
    rounds = int(round(math.log2(settings.refine_factor)))
    resolution = grid_step / settings.refine_factor
    for r in range(rounds):
        ordered = sorted(found)
        mids = [0.5 * (a + b) for a, b in zip(ordered[:-1], ordered[1:])
                if found[a].label != found[b].label and b - a > resolution * (1.0 - 1e-9)]
        if not mids:
            break
        found.update(zip(mids, _outside_bound(_classify_many(src, mids, settings, f"refine {r + 1}"), limit)))

    # the points next to a change are about to become inconclusive; sample one step further out
    outer = _edge_neighbours(found, resolution, lo, hi)
    if outer:
        found.update(zip(outer, _outside_bound(_classify_many(src, outer, settings, "edges"), limit)))

    ordered = sorted(found)
    classes = _mark_edges([found[E] for E in ordered], resolution)
    bands = _assemble_bands(classes)

    grid = {"start": lo, "stop": hi, "step": grid_step, "count": count,
            "refine_factor": settings.refine_factor}
    return SpectrumReport(energies=np.array(ordered), classifications=classes, bands=bands,
                          grid=grid, settings=settings.to_dict(),
                          model=dict(model if model is not None else src.descriptor))


# ----------------------------------------------------------------------
# Cross-checks
# ----------------------------------------------------------------------

_RUN_ONLY_SETTINGS = ("parallelism", "progress")


def _numeric_settings(report: SpectrumReport) -> Dict[str, Any]:
    return {k: v for k, v in report.settings.items() if k not in _RUN_ONLY_SETTINGS}


def inclusion_check(spec: HullSpec, x_report: SpectrumReport, omega_report: SpectrumReport,
                    eps: float) -> InclusionResult:
    """
    Every spectrum energy of omega_report lies within eps of a band of x_report.

    Both reports must share the grid and every numerical setting; worker
    count and progress display may differ. ``spec`` is the hull the two
    reports were sampled from and is recorded in the result.
    """
    keys = ("start", "step", "count")
    if any(x_report.grid[k] != omega_report.grid[k] for k in keys):
        raise GridMismatchError(
            f"grids differ: {[x_report.grid[k] for k in keys]} vs {[omega_report.grid[k] for k in keys]}")
    if _numeric_settings(x_report) != _numeric_settings(omega_report):
        raise GridMismatchError("reports were produced with different settings")
    violations = [float(E) for E in omega_report.spectrum_energies()
                  if not any(b.distance(E) <= eps for b in x_report.bands)]
    if violations:
        _logger.info(f"{spec.family}: {len(violations)} spectrum energies farther than {eps} from every band")
    return InclusionResult(ok=not violations, eps=eps, violations=violations, family=spec.family)


def section_consistency(src: PotentialSource, report: SpectrumReport, section_size: int,
                        edge_allowance: int = 0) -> float:
    """Largest distance from a centered finite-section eigenvalue to the report's bands."""
    if section_size < 16:
        raise ConfigError(f"section_size: must be >= 16, got {section_size}")
    if not report.bands:
        return math.inf
    eig = eigenvalues(FiniteSection.centered(src, section_size))
    dist = np.sort([min(b.distance(e) for b in report.bands) for e in eig])
    if edge_allowance:
        dist = dist[:-edge_allowance]
    return float(dist[-1]) if dist.size else 0.0


def witness_inclusion(x_src: PotentialSource, omega_src: PotentialSource, E: float, eps: float,
                      support_max: int, center_range: Sequence[int] = (0, 0),
                      shift_range: Sequence[int] = (-256, 256)) -> WitnessInclusion:
    """
    Take a Weyl witness of H_omega at E with defect < eps/2 and slide it along
    x; a translate with defect < eps puts E within eps of the spectrum of H_x.
    """
    found = min_support_length(omega_src, E, eps / 2.0, support_max, center_range)
    w = found.witness
    best: Optional[Tuple[float, int]] = None
    for t in range(int(shift_range[0]), int(shift_range[1]) + 1):
        d = weyl_defect(x_src, E, SiteVector(w.support[0] + t, w.vector))
        if best is None or d < best[0]:
            best = (d, t)
    defect, offset = best
    transported = WeylWitness((w.support[0] + offset, w.support[1] + offset), w.vector, defect, float(E))
    return WitnessInclusion(ok=defect < eps, eps=eps, omega_witness=w, offset=offset,
                            transported=transported)
