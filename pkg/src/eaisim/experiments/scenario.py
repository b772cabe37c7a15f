"""Scenario files: a dipole system plus probes, frequency grid and expectations.

Schema (YAML)::

    name: five-chain
    description: free text
    system:        see ``eaisim.model.build_system``
    coupling:      full | near | intermediate | far   (dipole-dipole terms)
    frequencies:   {start, stop, step}                 GHz, inclusive
    analysis_ghz:  default frequency for fringe, recover and converge
    source:        {position, green, polarization}    single spectrum probe
    scan:          probe path, plus optional reference position
    probes:        discrete probe set for H measurement and recovery
    precision_digits: decimal digits for recovery (omit for float64)
    expected:      list of observables checked by ``run_regression``

A probe path or probe set is one of::

    {kind: line, start, step, count}      extendable by changing count
    {kind: line, start, stop, count}      fixed span, count points
    {kind: circle, radius, count, start_deg, step_deg, center}
    {kind: points, points: [[x, y, z], ...]}

with optional ``green`` and ``polarization`` keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import config as yaml_config
from ..config import line_of
from ..greens import GreenOptions, Prefactor
from ..interferometry import Probe, ProbeSet
from ..model import ConfigError, DipoleSystem, build_system

OBSERVABLE_KINDS = {
    "peaks", "fwhm", "leading_cluster", "dominance", "symmetry", "recovery", "mode_order",
    "fringe_consistency", "localization", "plateau", "nearest_neighbour_phase",
    "visibility_contrast", "visibility_shift",
}
ORIGINS = {"reported", "computed"}


@dataclass(frozen=True)
class Expectation:
    """One checkable observable with its tolerance."""

    kind: str
    params: Mapping[str, Any]
    origin: str
    line: int | None = None
    known_deviation: str | None = None

    def get(self, key, default=None):
        return self.params.get(key, default)


@dataclass(frozen=True)
class ProbePath:
    """Recipe for a probe set; ``count`` can be overridden."""

    kind: str
    params: Mapping[str, Any]
    green: str = "full"
    polarization: tuple = (0.0, 0.0, 1.0)

    @property
    def count(self) -> int:
        if self.kind == "points":
            return len(self.params["points"])
        return int(self.params["count"])

    @property
    def fixed_span(self) -> bool:
        return self.kind == "line" and "stop" in self.params

    def build(self, count: int | None = None, green: str | None = None) -> ProbeSet:
        opts = GreenOptions.named(green or self.green)
        pol = self.polarization
        n = self.count if count is None else int(count)
        if n < 1:
            raise ConfigError(f"probe count must be >= 1, got {n}", "probes.count")
        p = self.params
        if self.kind == "line":
            start = np.asarray(p["start"], float)
            if "stop" in p:
                return ProbeSet.line(start, p["stop"], n, pol, opts)
            step = np.asarray(p["step"], float)
            return ProbeSet.from_points(start + np.arange(n)[:, None] * step, pol, opts)
        if self.kind == "circle":
            return ProbeSet.circle(float(p["radius"]), n, float(p.get("start_deg", 0.0)),
                                   p.get("step_deg"), p.get("center", (0.0, 0.0, 0.0)), pol, opts)
        pts = np.asarray(p["points"], float)
        if n > len(pts):
            raise ConfigError(f"only {len(pts)} probe points listed, {n} requested", "probes.points")
        return ProbeSet.from_points(pts[:n], pol, opts)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    system_config: Mapping[str, Any]
    system: DipoleSystem
    coupling: GreenOptions
    freqs_ghz: np.ndarray
    analysis_ghz: float
    source: Probe | None = None
    scan: ProbePath | None = None
    scan_reference: np.ndarray | None = None
    probes: ProbePath | None = None
    precision_digits: int | None = None
    expected: tuple[Expectation, ...] = field(default_factory=tuple)
    path: Path | None = None

    def with_system(self, system: DipoleSystem) -> "Scenario":
        return replace(self, system=system)

    def reference_probe(self) -> Probe:
        if self.scan is None or self.scan_reference is None:
            raise ConfigError(f"scenario {self.name!r} has no scan reference", "scan.reference")
        return Probe(self.scan_reference, self.scan.polarization, GreenOptions.named(self.scan.green))


def _require(cfg, key, path):
    if not isinstance(cfg, Mapping) or key not in cfg:
        raise ConfigError("missing required field", f"{path}.{key}" if path else key, line_of(cfg))
    return cfg[key]


def _green(value, path, cfg, key) -> str:
    if value not in ("full", "near", "intermediate", "far"):
        raise ConfigError(f"unknown Green's option {value!r}", path, line_of(cfg, key))
    return value


def _vector(value, path, line) -> np.ndarray:
    try:
        out = np.asarray(value, dtype=float).reshape(3)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a 3-vector, got {value!r}", path, line) from None
    if not np.all(np.isfinite(out)):
        raise ConfigError("non-finite vector", path, line)
    return out


def _probe_path(cfg, path: str) -> ProbePath:
    if not isinstance(cfg, Mapping):
        raise ConfigError("expected a mapping", path, line_of(cfg))
    kind = _require(cfg, "kind", path)
    params = {k: v for k, v in cfg.items() if k not in ("kind", "green", "polarization", "reference")}
    if kind == "line":
        _vector(_require(cfg, "start", path), f"{path}.start", line_of(cfg, "start"))
        if "stop" not in cfg and "step" not in cfg:
            raise ConfigError("line needs either stop or step", path, line_of(cfg))
        for key in ("stop", "step"):
            if key in cfg:
                _vector(cfg[key], f"{path}.{key}", line_of(cfg, key))
        _require(cfg, "count", path)
    elif kind == "circle":
        for key in ("radius", "count"):
            _require(cfg, key, path)
    elif kind == "points":
        pts = _require(cfg, "points", path)
        for i, p in enumerate(pts):
            _vector(p, f"{path}.points[{i}]", line_of(pts, i))
        params["count"] = len(pts)
    else:
        raise ConfigError(f"unknown probe path kind {kind!r}", f"{path}.kind", line_of(cfg, "kind"))
    count = params.get("count")
    if not isinstance(count, int) or isinstance(count, bool) or count < 1:
        raise ConfigError(f"count must be a positive integer, got {count!r}", f"{path}.count",
                          line_of(cfg, "count"))
    green = _green(cfg.get("green", "full"), f"{path}.green", cfg, "green")
    pol = tuple(_vector(cfg.get("polarization", (0, 0, 1)), f"{path}.polarization", line_of(cfg, "polarization")))
    return ProbePath(kind, params, green, pol)


def _frequencies(cfg, path="frequencies") -> np.ndarray:
    try:
        start, stop, step = (float(_require(cfg, k, path)) for k in ("start", "stop", "step"))
    except (TypeError, ValueError):
        raise ConfigError("start, stop and step must be numbers", path, line_of(cfg)) from None
    if not (0 < start <= stop) or step <= 0:
        raise ConfigError("need 0 < start <= stop and step > 0", path, line_of(cfg))
    count = int(round((stop - start) / step)) + 1
    return start + step * np.arange(count)


def _expectations(items) -> tuple[Expectation, ...]:
    out = []
    for i, item in enumerate(items or []):
        path = f"expected[{i}]"
        line = line_of(items, i)
        kind = _require(item, "observable", path)
        if kind not in OBSERVABLE_KINDS:
            raise ConfigError(f"unknown observable {kind!r}", f"{path}.observable", line)
        origin = _require(item, "origin", path)
        if origin not in ORIGINS:
            raise ConfigError(f"origin must be one of {sorted(ORIGINS)}", f"{path}.origin", line)
        params = {k: v for k, v in item.items() if k not in ("observable", "origin", "known_deviation")}
        if not any(k in params for k in ("tol", "max_angle", "max_rel", "min_ratio", "max_fraction",
                                          "min_fraction", "min_overlap", "max_ratio", "rel_gap", "tol_deg",
                                          "min_deg")):
            raise ConfigError("every observable needs a tolerance", path, line)
        out.append(Expectation(kind, params, origin, line, item.get("known_deviation")))
    return tuple(out)


def parse_scenario(cfg: Mapping, path: Path | None = None, overrides: Mapping | None = None) -> Scenario:
    """Validate a parsed scenario mapping; ``overrides`` replaces top-level keys."""
    if not isinstance(cfg, Mapping):
        raise ConfigError("scenario file must contain a mapping", None, line_of(cfg))
    if overrides:
        cfg = type(cfg)(cfg) if isinstance(cfg, dict) else dict(cfg)
        if hasattr(cfg, "lines"):
            cfg.lines = {}
        cfg.update(overrides)
    name = str(_require(cfg, "name", ""))
    system_cfg = _require(cfg, "system", "")
    system = build_system(system_cfg)
    coupling = GreenOptions.named(_green(cfg.get("coupling", "full"), "coupling", cfg, "coupling"),
                                  Prefactor.K_SQUARED)
    freqs = _frequencies(_require(cfg, "frequencies", ""))
    analysis = float(cfg.get("analysis_ghz", freqs[len(freqs) // 2]))
    if analysis <= 0:
        raise ConfigError("analysis_ghz must be positive", "analysis_ghz", line_of(cfg, "analysis_ghz"))

    source = None
    if "source" in cfg:
        s = cfg["source"]
        source = Probe(_vector(_require(s, "position", "source"), "source.position", line_of(s, "position")),
                       _vector(s.get("polarization", (0, 0, 1)), "source.polarization", line_of(s, "polarization")),
                       GreenOptions.named(_green(s.get("green", "full"), "source.green", s, "green")))
    scan = ref = None
    if "scan" in cfg:
        scan = _probe_path(cfg["scan"], "scan")
        if "reference" in cfg["scan"]:
            ref = _vector(cfg["scan"]["reference"], "scan.reference", line_of(cfg["scan"], "reference"))
    probes = _probe_path(cfg["probes"], "probes") if "probes" in cfg else None
    digits = cfg.get("precision_digits")
    if digits is not None and (not isinstance(digits, int) or digits < 16):
        raise ConfigError("precision_digits must be an integer >= 16", "precision_digits",
                          line_of(cfg, "precision_digits"))
    return Scenario(name, str(cfg.get("description", "")).strip(), system_cfg, system, coupling, freqs,
                    analysis, source, scan, ref, probes, digits, _expectations(cfg.get("expected")), path)


def _bundled() -> dict[str, Path]:
    root = resources.files("eaisim") / "scenarios"
    return {Path(str(p)).stem: Path(str(p)) for p in root.iterdir() if str(p).endswith(".yaml")}


def list_scenarios() -> list[str]:
    return sorted(_bundled())


def load_scenario(name_or_path: str | Path, overrides: Mapping | None = None) -> Scenario:
    """Load a bundled scenario by name, or any scenario file by path."""
    p = Path(name_or_path)
    if not p.suffix:
        bundled = _bundled()
        if str(name_or_path) not in bundled:
            raise ConfigError(f"unknown scenario {str(name_or_path)!r}; available: {', '.join(sorted(bundled))}")
        p = bundled[str(name_or_path)]
    return parse_scenario(yaml_config.load(p), p, overrides)
