"""
Run configuration and command dispatch for the uh_spectrum command line.

A run is described by one JSON/YAML document plus flag overrides. Every
artifact echoes the fully resolved configuration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import yaml

from .artifacts import write_csv, write_json
from .errors import ConfigError, SupportNotFoundError
from .green import build_kernel, export_kernel, operator_norm_bound, verify_inverse
from .hamiltonian import FiniteSection, eigenvalues, min_support_length
from .models import HullSpec, hull_samples, make_source
from .scanner import (ScanSettings, default_energy_range, inclusion_check, scan,
                      section_consistency)
from .uhdetect import UHCertificate, bounded_witness_search, certify

_logger = logging.getLogger(__name__)

COMMANDS = ("scan", "certify", "green", "witness", "eig", "compare")


@dataclass
class RunConfig:
    """Everything one command needs; every field has a default."""

    command: str = "scan"
    model: HullSpec = field(default_factory=lambda: HullSpec("constant"))
    energy: float = 0.0
    energy_range: Optional[Tuple[float, float]] = None
    grid_step: float = 0.01
    settings: ScanSettings = field(default_factory=ScanSettings)
    section_size: int = 512
    eps: float = 0.05
    support_eps: float = 0.5
    support_max: int = 256
    green_half_width: int = 200
    kernel_radius: int = 20
    trials: int = 20
    hull_count: int = 8
    edge_allowance: int = 4
    out: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if not (isinstance(self.grid_step, (int, float)) and self.grid_step > 0):
            raise ConfigError(f"grid_step: must be > 0, got {self.grid_step!r}")
        if not math.isfinite(self.energy):
            raise ConfigError("energy: must be finite")
        if self.energy_range is not None:
            lo, hi = (float(x) for x in self.energy_range)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigError(f"energy_range: invalid range {list(self.energy_range)}")
            self.energy_range = (lo, hi)
        for name in ("section_size", "support_max", "green_half_width", "trials", "hull_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.section_size < 16:
            raise ConfigError("section_size: must be >= 16")
        for name in ("eps", "support_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be > 0")
        if self.kernel_radius < 0 or self.edge_allowance < 0:
            raise ConfigError("kernel_radius/edge_allowance: must be >= 0")
        if self.seed is not None:
            if self.model.family != "random_iid":
                _logger.info(f"seed {self.seed} ignored for family {self.model.family}")
            else:
                self.model.params["seed"] = int(self.seed)

    @property
    def out_prefix(self) -> str:
        return self.out or f"output/{self.command}"

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["model"] = self.model.to_dict()
        data["settings"] = self.settings.to_dict()
        data["energy_range"] = list(self.energy_range) if self.energy_range else None
        data["out"] = self.out_prefix
        return data


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------

def load_config_file(path) -> Dict[str, Any]:
    """Read a JSON or YAML config document."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config: {path} is not valid JSON/YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"config: {path} must hold an object at top level")
    return dict(data)


def _settings_from(data: Mapping[str, Any]) -> ScanSettings:
    known = {f.name for f in fields(ScanSettings)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"settings.{sorted(unknown)[0]}: unknown setting")
    values = dict(data)
    if "window" in values:
        w = values["window"]
        values["window"] = (-int(w), int(w)) if isinstance(w, (int, float)) else tuple(w)
    try:
        return ScanSettings(**values)
    except TypeError as e:
        raise ConfigError(f"settings: {e}") from e


def _parse_range(text: Any) -> Tuple[float, float]:
    if isinstance(text, str):
        parts = text.split(",")
    else:
        parts = list(text)
    if len(parts) != 2:
        raise ConfigError(f"energy_range: expected 'a,b', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"energy_range: expected two reals, got {text!r}") from e


def build_config(data: Optional[Mapping[str, Any]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Merge a config document with flag overrides (flags win) into a RunConfig.

    Overrides use the flag names: command, model, E, E_range, step, depth,
    window, out, parallelism, seed. ``None`` values are ignored.
    """
    data = dict(data or {})
    flags = {k: v for k, v in dict(overrides or {}).items() if v is not None}
    known = {f.name for f in fields(RunConfig)} | {"parallelism"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config key")

    model_data = dict(data.pop("model", None) or {"family": "constant"})
    if "model" in flags and flags["model"] != model_data.get("family"):
        model_data = {"family": flags["model"]}
    model = HullSpec.from_dict(model_data)

    settings_data = dict(data.pop("settings", None) or {})
    if "parallelism" in data:
        settings_data.setdefault("parallelism", data.pop("parallelism"))
    if "depth" in flags:
        settings_data["depth"] = int(flags["depth"])
    if "window" in flags:
        settings_data["window"] = int(flags["window"])
    if "progress" in flags:
        settings_data["progress"] = bool(flags["progress"])
    if "parallelism" in flags:
        settings_data["parallelism"] = int(flags["parallelism"])
    settings = _settings_from(settings_data)

    if "energy_range" in data and data["energy_range"] is not None:
        data["energy_range"] = _parse_range(data["energy_range"])
    for flag, key in (("command", "command"), ("E", "energy"), ("step", "grid_step"),
                      ("out", "out"), ("seed", "seed")):
        if flag in flags:
            data[key] = flags[flag]
    if "E_range" in flags:
        data["energy_range"] = _parse_range(flags["E_range"])
    for key in ("energy", "grid_step", "eps", "support_eps"):
        if key in data:
            try:
                data[key] = float(data[key])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{key}: expected a real number, got {data[key]!r}") from e
    try:
        return RunConfig(model=model, settings=settings, **data)
    except TypeError as e:
        raise ConfigError(f"config: {e}") from e


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def _bands_text(bands) -> str:
    if not bands:
        return "   (no spectrum-labeled energies)"
    return "\n".join(f"   [{b.lo:.6g}, {b.hi:.6g}]" for b in bands)


def _run_scan(config: RunConfig) -> List[str]:
    src = make_source(config.model)
    report = scan(src, config.energy_range, config.grid_step, config.settings, model=config.model.to_dict())
    prefix = config.out_prefix
    csv_path = write_csv(f"{prefix}.csv", ("E", "label", "lambda", "gap", "witness_log_norm", "decay_rate"),
                         report.csv_rows())
    json_path = write_json(f"{prefix}.json", {"config": config.to_dict(), "report": report.to_dict()})
    counts = {label: report.labels.count(label) for label in ("resolvent", "spectrum", "inconclusive")}
    print(f"✅ Classified {len(report.labels)} energies: {counts}")
    print(f"📈 BANDS ({len(report.bands)})")
    print(_bands_text(report.bands))
    return [str(csv_path), str(json_path)]


def _run_certify(config: RunConfig) -> List[str]:
    src = make_source(config.model)
    s = config.settings
    result = certify(src, config.energy, s.window, s.depth, **s.certify_kwargs())
    prefix = config.out_prefix
    paths = []
    if isinstance(result, UHCertificate):
        paths.append(str(write_csv(f"{prefix}.csv", ("k", "u", "s"),
                                   zip(result.sites.tolist(), result.u_angles, result.s_angles))))
        payload = {"config": config.to_dict(), "certified": True, "certificate": result.to_dict(include_sections=False)}
        print(f"✅ CERTIFIED at E={config.energy!r}")
        print(f"   lambda={result.lambda_:.8g}  c={result.c_const:.6g}  gamma={result.gap_gamma:.6g}")
        print(f"   beta={result.beta:.6g}  C={result.contraction_const:.6g}  cone_ok={result.cone_ok}")
    else:
        payload = {"config": config.to_dict(), "certified": False, "failure": result.to_dict()}
        print(f"❌ FAILED: {result.reason} (first violation at k={result.first_violation_site})")
    paths.append(str(write_json(f"{prefix}.json", payload)))
    return paths


def _run_green(config: RunConfig) -> List[str]:
    src = make_source(config.model)
    s = config.settings
    W = config.green_half_width
    cert = certify(src, config.energy, (-W - s.depth, W + s.depth), s.depth, **s.certify_kwargs())
    if not isinstance(cert, UHCertificate):
        raise ConfigError(f"energy: E={config.energy!r} is not certified ({cert.reason}); "
                          f"kernels are only built at resolvent energies")
    kernel = build_kernel(src, config.energy, cert, (-W, W))
    residual = verify_inverse(src, config.energy, kernel, config.trials)
    bound = operator_norm_bound(kernel)
    csv_path, json_path = export_kernel(kernel, config.out_prefix, config.kernel_radius,
                                        extra={"config": config.to_dict(), "verify_inverse": residual,
                                               "operator_norm_bound": bound,
                                               "certificate_lambda": cert.lambda_})
    print(f"✅ Green's function at E={config.energy!r} on [{-W}, {W}]")
    print(f"   G(0,0)={kernel.value(0, 0):.10g}  decay_rate={kernel.decay_rate:.8g}  C={kernel.decay_const:.6g}")
    print(f"   wronskian_drift={kernel.wronskian_drift:.2e}  inverse residual={residual:.2e}  ||S||<={bound:.6g}")
    return [csv_path, json_path]


def _run_witness(config: RunConfig) -> List[str]:
    src = make_source(config.model)
    s = config.settings
    witness = bounded_witness_search(src, config.energy, s.window, s.depth, s.angle_grid,
                                     screen_grid=s.screen_grid, screen_keep=s.screen_keep)
    payload: Dict[str, Any] = {"config": config.to_dict(), "bounded_witness": witness.to_dict(),
                               "threshold": s.witness_threshold}
    try:
        found = min_support_length(src, config.energy, config.support_eps, config.support_max)
        payload["weyl_witness"] = {"length": found.length, **found.witness.to_dict()}
        weyl_text = f"L={found.length}, defect={found.witness.defect:.6g}"
    except SupportNotFoundError as e:
        payload["weyl_witness"] = None
        weyl_text = f"not found ({e})"
    n = np.arange(-s.depth, s.depth + 1)
    csv_path = write_csv(f"{config.out_prefix}.csv", ("n", "log_norm"), zip(n.tolist(), witness.orbit_log_norms))
    json_path = write_json(f"{config.out_prefix}.json", payload)
    marker = "✅" if witness.max_log_norm <= s.witness_threshold else "⚠️ "
    print(f"{marker} Bounded-orbit witness at E={config.energy!r}: max_log_norm={witness.max_log_norm:.6g} "
          f"(threshold {s.witness_threshold:.4g}) at k={witness.site}")
    print(f"   Weyl witness (eps={config.support_eps}): {weyl_text}")
    return [str(csv_path), str(json_path)]


def _run_eig(config: RunConfig) -> List[str]:
    src = make_source(config.model)
    sec = FiniteSection.centered(src, config.section_size)
    eig = eigenvalues(sec)
    csv_path = write_csv(f"{config.out_prefix}.csv", ("index", "eigenvalue"), enumerate(eig.tolist()))
    limit = src.bound + 2.0
    json_path = write_json(f"{config.out_prefix}.json",
                           {"config": config.to_dict(), "first_index": sec.first_index, "size": sec.size,
                            "min": float(eig[0]), "max": float(eig[-1]),
                            "within_bound": bool(eig[0] >= -limit and eig[-1] <= limit)})
    print(f"✅ {sec.size} eigenvalues in [{eig[0]:.8g}, {eig[-1]:.8g}] (bound ±{limit:g})")
    return [str(csv_path), str(json_path)]


def _run_compare(config: RunConfig) -> List[str]:
    samples = hull_samples(config.model, config.hull_count)
    x = samples[0]
    E_range = config.energy_range or default_energy_range(x)
    reports = [scan(src, E_range, config.grid_step, config.settings, model=src.descriptor) for src in samples]
    rows, results = [], []
    for j in range(1, len(samples)):
        forward = inclusion_check(config.model, reports[0], reports[j], config.eps)
        backward = inclusion_check(config.model, reports[j], reports[0], config.eps)
        results.append({"sample": j, "phase": samples[j].descriptor.get("phase"),
                        "omega_in_x": forward.to_dict(), "x_in_omega": backward.to_dict()})
        rows.append((j, "omega_in_x", forward.ok, len(forward.violations)))
        rows.append((j, "x_in_omega", backward.ok, len(backward.violations)))
    consistency = section_consistency(x, reports[0], config.section_size, config.edge_allowance)
    csv_path = write_csv(f"{config.out_prefix}.csv", ("sample", "direction", "ok", "violations"), rows)
    json_path = write_json(f"{config.out_prefix}.json",
                           {"config": config.to_dict(), "inclusions": results,
                            "section_consistency": consistency,
                            "bands": [[b.to_dict() for b in r.bands] for r in reports]})
    ok = all(r[2] for r in rows)
    print(f"{'✅' if ok else '❌'} Inclusion across {len(samples)} hull samples (eps={config.eps}): "
          f"{sum(r[2] for r in rows)}/{len(rows)} checks passed")
    print("📈 Bands of x:")
    print(_bands_text(reports[0].bands))
    print(f"   section consistency (size {config.section_size}): {consistency:.4g}")
    return [str(csv_path), str(json_path)]


_COMMANDS = {"scan": _run_scan, "certify": _run_certify, "green": _run_green,
             "witness": _run_witness, "eig": _run_eig, "compare": _run_compare}


def run(config: RunConfig) -> List[str]:
    """Dispatch ``config.command``; returns the written artifact paths."""
    _logger.info(f"running {config.command} on {config.model.family}")
    paths = _COMMANDS[config.command](config)
    for p in paths:
        print(f"💾 {p}")
    return paths
