"""
Concrete potential families and hull sampling.

Each family is a ``PotentialSource``; ``HullSpec`` is the config-facing
description of a family together with the phases to sample.
"""

from __future__ import annotations

import json
import logging
import math
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .cocycle import PotentialSource
from .errors import BadPhaseError, ConfigError, PotentialIndexError

_logger = logging.getLogger(__name__)

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
FAMILIES = ("constant", "periodic", "almost_mathieu", "sturmian", "random_iid", "file")
REAL_PHASE_FAMILIES = ("almost_mathieu", "sturmian")
RANDOM_BLOCK = 4096
DEFAULT_SHIFT_STRIDE = 97
_RATIONAL_MAX_DEN = 1000
_RATIONAL_TOL = 1e-12


@dataclass
class HullSpec:
    """A potential family, its parameters and the hull phases to sample."""

    family: str
    params: Dict[str, Any] = field(default_factory=dict)
    phases: List[Any] = field(default_factory=list)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"model.family: unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        self.params = dict(self.params or {})
        self.phases = list(self.phases or [])

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HullSpec":
        if not isinstance(data, Mapping) or "family" not in data:
            raise ConfigError("model.family: missing")
        params = data.get("params") or {}
        phases = data.get("phases") or []
        if not isinstance(params, Mapping):
            raise ConfigError("model.params: expected an object")
        if not isinstance(phases, (list, tuple)):
            raise ConfigError("model.phases: expected a list")
        return cls(family=str(data["family"]), params=dict(params), phases=list(phases))

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "params": dict(self.params), "phases": list(self.phases)}


# ----------------------------------------------------------------------
# Families
# ----------------------------------------------------------------------

class ConstantPotential(PotentialSource):
    def __init__(self, value: float = 0.0, descriptor: Optional[Mapping[str, Any]] = None):
        self.value = float(value)
        super().__init__(abs(self.value), {"family": "constant", "value": self.value, **dict(descriptor or {})})

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        return np.full(sites.shape, self.value)


class PeriodicPotential(PotentialSource):
    def __init__(self, pattern: Sequence[float], descriptor: Optional[Mapping[str, Any]] = None):
        self.pattern = np.array(pattern, dtype=float).reshape(-1)
        if self.pattern.size == 0:
            raise ConfigError("model.params.pattern: must be non-empty")
        self.pattern.flags.writeable = False
        super().__init__(float(np.max(np.abs(self.pattern))),
                         {"family": "periodic", "pattern": self.pattern.tolist(),
                          "period": int(self.pattern.size), **dict(descriptor or {})})

    @property
    def period(self) -> int:
        return int(self.pattern.size)

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        return self.pattern[np.mod(sites, self.pattern.size)]


def _alpha_metadata(alpha: float) -> Dict[str, Any]:
    approx = Fraction(alpha).limit_denominator(_RATIONAL_MAX_DEN)
    rational = abs(float(approx) - alpha) <= _RATIONAL_TOL
    meta: Dict[str, Any] = {"alpha_rational": rational}
    if rational:
        meta["alpha_fraction"] = f"{approx.numerator}/{approx.denominator}"
    return meta


class AlmostMathieuPotential(PotentialSource):
    """v(n) = 2 coupling cos(2 pi (n alpha + theta))."""

    def __init__(self, coupling: float = 1.0, alpha: float = GOLDEN_MEAN, theta: float = 0.0,
                 descriptor: Optional[Mapping[str, Any]] = None):
        self.coupling, self.alpha, self.theta = float(coupling), float(alpha), float(theta)
        super().__init__(2.0 * abs(self.coupling),
                         {"family": "almost_mathieu", "coupling": self.coupling, "alpha": self.alpha,
                          "theta": self.theta, **_alpha_metadata(self.alpha), **dict(descriptor or {})})

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        phase = np.mod(sites * self.alpha + self.theta, 1.0)
        return 2.0 * self.coupling * np.cos(2.0 * np.pi * phase)


class SturmianPotential(PotentialSource):
    """v(n) = coupling * 1[(n alpha + theta) mod 1 >= 1 - alpha]."""

    def __init__(self, coupling: float = 1.0, alpha: float = GOLDEN_MEAN, theta: float = 0.0,
                 descriptor: Optional[Mapping[str, Any]] = None):
        self.coupling, self.alpha, self.theta = float(coupling), float(alpha), float(theta)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"model.params.alpha: sturmian frequency must lie in (0, 1), got {self.alpha!r}")
        super().__init__(abs(self.coupling),
                         {"family": "sturmian", "coupling": self.coupling, "alpha": self.alpha,
                          "theta": self.theta, **_alpha_metadata(self.alpha), **dict(descriptor or {})})

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        phase = np.mod(sites * self.alpha + self.theta, 1.0)
        return np.where(phase >= 1.0 - self.alpha, self.coupling, 0.0)


def _zigzag(block: int) -> int:
    return 2 * block if block >= 0 else -2 * block - 1


@lru_cache(maxsize=256)
def _random_block(seed: int, block: int, bound: float) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64([seed, _zigzag(block)]))
    values = rng.uniform(-bound, bound, RANDOM_BLOCK)
    values.flags.writeable = False
    return values


class RandomPotential(PotentialSource):
    """I.i.d. uniform values on [-bound, bound], reproducible per seed."""

    def __init__(self, bound: float = 1.0, seed: int = 0, descriptor: Optional[Mapping[str, Any]] = None):
        if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
            raise ConfigError(f"model.params.seed: expected a non-negative integer, got {seed!r}")
        self.seed = int(seed)
        super().__init__(bound, {"family": "random_iid", "bound": float(bound), "seed": self.seed,
                                 "generator": "PCG64", "block_size": RANDOM_BLOCK,
                                 **dict(descriptor or {})})

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        out = np.empty(sites.shape)
        blocks = np.floor_divide(sites, RANDOM_BLOCK)
        for b in np.unique(blocks):
            mask = blocks == b
            out[mask] = _random_block(self.seed, int(b), self.bound)[sites[mask] - int(b) * RANDOM_BLOCK]
        return out


class FilePotential(PotentialSource):
    """
    A stored sequence: one real per line, with a JSON sidecar
    ``{"first_index": int, "bound": real}`` next to it (same stem, ``.json``).
    """

    def __init__(self, path, descriptor: Optional[Mapping[str, Any]] = None):
        self.path = Path(path)
        sidecar = self.path.with_suffix(".json")
        try:
            values = np.loadtxt(self.path, dtype=float, ndmin=1)
            with open(sidecar, "r", encoding="utf-8") as f:
                header = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"model.params.path: cannot load {self.path} / {sidecar}: {e}") from e
        if "first_index" not in header or "bound" not in header:
            raise ConfigError(f"model.params.path: sidecar {sidecar} needs first_index and bound")
        self.first_index = int(header["first_index"])
        self.values = values.reshape(-1)
        self.values.flags.writeable = False
        super().__init__(float(header["bound"]),
                         {"family": "file", "path": str(self.path), "first_index": self.first_index,
                          "length": int(self.values.size), **dict(descriptor or {})})

    @property
    def last_index(self) -> int:
        return self.first_index + self.values.size - 1

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        if sites.size and (sites.min() < self.first_index or sites.max() > self.last_index):
            outside = sites[(sites < self.first_index) | (sites > self.last_index)]
            raise PotentialIndexError(
                f"site {int(outside.reshape(-1)[0])} outside stored range "
                f"[{self.first_index}, {self.last_index}] of {self.path}"
            )
        return self.values[sites - self.first_index]


class ShiftedPotential(PotentialSource):
    """n -> base(n + offset)."""

    def __init__(self, base: PotentialSource, offset: int, descriptor: Optional[Mapping[str, Any]] = None):
        self.base = base
        self.offset = int(offset)
        super().__init__(base.bound, {**base.descriptor, "shift": self.offset, **dict(descriptor or {})})

    def _evaluate(self, sites: np.ndarray) -> np.ndarray:
        return self.base.samples(sites + self.offset)


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------

def shift(src: PotentialSource, m: int, descriptor: Optional[Mapping[str, Any]] = None) -> PotentialSource:
    """T^m: the result samples ``src`` at n + m. Nested shifts collapse."""
    m = int(m)
    if isinstance(src, ShiftedPotential):
        return ShiftedPotential(src.base, src.offset + m, descriptor)
    if m == 0 and not descriptor:
        return src
    return ShiftedPotential(src, m, descriptor)


def _real_phase(family: str, phase: Any) -> float:
    if isinstance(phase, bool) or not isinstance(phase, numbers.Real) or not math.isfinite(float(phase)):
        raise BadPhaseError(f"{family}: phase must be a finite real theta, got {phase!r}")
    return float(phase)


def _shift_phase(family: str, phase: Any) -> int:
    if isinstance(phase, bool) or not isinstance(phase, numbers.Integral):
        raise BadPhaseError(f"{family}: phase must be an integer shift, got {phase!r}")
    return int(phase)


def _param(params: Mapping[str, Any], name: str, default: Any = None, required: bool = False) -> Any:
    if name not in params:
        if required:
            raise ConfigError(f"model.params.{name}: required")
        return default
    return params[name]


def _real_param(params: Mapping[str, Any], name: str, default: float) -> float:
    value = _param(params, name, default)
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model.params.{name}: expected a real number, got {value!r}") from e
    if not math.isfinite(value):
        raise ConfigError(f"model.params.{name}: must be finite")
    return value


def make_source(spec: HullSpec, phase: Any = None,
                descriptor: Optional[Mapping[str, Any]] = None) -> PotentialSource:
    """
    Build the potential of ``spec`` at a hull phase.

    almost_mathieu and sturmian take a real theta (replacing params.theta);
    the other families take an integer shift. ``None`` is the base point.
    """
    p = spec.params
    family = spec.family
    extra = dict(descriptor or {})

    if family in REAL_PHASE_FAMILIES:
        coupling = _real_param(p, "coupling", 1.0)
        alpha = _real_param(p, "alpha", GOLDEN_MEAN)
        theta = _real_param(p, "theta", 0.0) if phase is None else _real_phase(family, phase)
        cls = AlmostMathieuPotential if family == "almost_mathieu" else SturmianPotential
        src = cls(coupling=coupling, alpha=alpha, theta=theta, descriptor=extra)
        if src.descriptor.get("alpha_rational"):
            _logger.info(f"{family}: alpha={alpha!r} is rational ({src.descriptor['alpha_fraction']}); hull is finite")
        return src

    offset = 0 if phase is None else _shift_phase(family, phase)
    if family == "constant":
        base = ConstantPotential(_real_param(p, "value", 0.0))
    elif family == "periodic":
        pattern = _param(p, "pattern", required=True)
        try:
            base = PeriodicPotential([float(x) for x in pattern])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"model.params.pattern: expected a list of reals, got {pattern!r}") from e
    elif family == "random_iid":
        bound = _real_param(p, "bound", 1.0)
        if bound < 0:
            raise ConfigError("model.params.bound: must be >= 0")
        base = RandomPotential(bound=bound, seed=_param(p, "seed", 0))
    else:
        base = FilePotential(_param(p, "path", required=True))

    if offset == 0 and not extra:
        return base
    return ShiftedPotential(base, offset, extra)


def default_phases(spec: HullSpec, count: int, shift_stride: int = DEFAULT_SHIFT_STRIDE) -> List[Any]:
    if spec.family == "almost_mathieu":
        theta0 = _real_param(spec.params, "theta", 0.0)
        return [theta0 + j / (2.0 * count) for j in range(count)]
    if spec.family == "sturmian":
        theta0 = _real_param(spec.params, "theta", 0.0)
        return [theta0 + j / count for j in range(count)]
    if spec.family in ("constant", "periodic"):
        return list(range(count))
    return [j * shift_stride for j in range(count)]


def hull_samples(spec: HullSpec, count: int,
                 shift_stride: int = DEFAULT_SHIFT_STRIDE) -> List[PotentialSource]:
    """
    ``count`` points of the hull. Phases listed in ``spec.phases`` are used
    first (capped at ``count``). Sample 0 is the designated dense-orbit point.
    """
    if count < 1:
        raise ConfigError(f"hull_count: must be >= 1, got {count}")
    phases = list(spec.phases[:count])
    if len(phases) < count:
        phases += default_phases(spec, count, shift_stride)[len(phases):]
    return [
        make_source(spec, phase, {"hull_index": j, "phase": phase, "dense_orbit_point": j == 0})
        for j, phase in enumerate(phases)
    ]
