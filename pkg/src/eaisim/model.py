"""Dipole systems, unit conventions and per-dipole material parameters.

Geometry is in millimetres. Frequencies enter in GHz (ordinary frequency)
and are stored as angular frequencies in rad/s. Polarizabilities are the
electrostatic values divided by the vacuum permittivity, in mm^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

#: speed of light in mm/s
C_MM_PER_S = 2.99792458e11

MIN_SEPARATION_MM = 1e-9


class ConfigError(ValueError):
    """Invalid scenario or system description.

    ``field`` is a dotted path into the config and ``line`` the 1-based
    source line when the config came from a file.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SingularShapeError(ValueError):
    pass


def ghz_to_omega(f_ghz):
    return 2.0 * np.pi * np.asarray(f_ghz, dtype=float) * 1e9


def omega_to_ghz(omega):
    return np.asarray(omega, dtype=float) / (2.0 * np.pi * 1e9)


def wavenumber(omega):
    """Free-space wavenumber in 1/mm."""
    return omega / C_MM_PER_S


def wavelength_mm(f_ghz):
    return C_MM_PER_S / (np.asarray(f_ghz, dtype=float) * 1e9)


def clausius_mossotti(epsilon_r: complex, n: float, volume: float) -> complex:
    """Electrostatic polarizability over epsilon_0 of a small particle.

    ``n`` is the depolarization (shape) factor, 1/3 for a sphere.
    """
    if not 0.0 < n < 1.0:
        raise ValueError(f"shape factor must lie in (0, 1), got {n}")
    if volume <= 0:
        raise ValueError(f"volume must be positive, got {volume}")
    denom = 1.0 + n * (epsilon_r - 1.0)
    if abs(denom) < 1e-12:
        raise SingularShapeError(f"permittivity {epsilon_r} makes the Clausius-Mossotti denominator vanish")
    value = (epsilon_r - 1.0) / denom * volume
    return value


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"expected a finite 3-vector, got {value!r}", name)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dipole:
    """A bound charge constrained to oscillate along ``axis``.

    ``omega0`` and ``gamma`` are in rad/s, ``alpha`` in mm^3.
    """

    position: np.ndarray
    axis: np.ndarray
    omega0: float
    gamma: float
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        axis = _vec3(self.axis, "axis")
        norm = float(np.linalg.norm(axis))
        if norm == 0:
            raise ConfigError("dipole axis must be non-zero", "axis")
        if abs(norm - 1.0) > 1e-12:
            axis = axis / norm
            axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        for name in ("omega0", "gamma", "alpha"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"must be positive and finite, got {value}", name)
            object.__setattr__(self, name, value)

    @classmethod
    def from_ghz(cls, position, f0_ghz: float, gamma_ghz: float, alpha: float, axis=(0.0, 0.0, 1.0)):
        return cls(position, axis, float(ghz_to_omega(f0_ghz)), float(ghz_to_omega(gamma_ghz)), alpha)

    @property
    def f0_ghz(self) -> float:
        return float(omega_to_ghz(self.omega0))

    @property
    def gamma_ghz(self) -> float:
        return float(omega_to_ghz(self.gamma))

    @property
    def charge_ratio(self) -> float:
        """q^2/m in internal units (epsilon_0 = 1)."""
        return self.alpha * self.omega0**2


@dataclass(frozen=True)
class DipoleSystem:
    """Ordered, immutable collection of dipoles.

    Dipole ``k`` owns rows/columns ``3k .. 3k+2`` of every system matrix.
    """

    dipoles: tuple[Dipole, ...]
    positions: np.ndarray = field(init=False, repr=False)
    axes: np.ndarray = field(init=False, repr=False)
    omega0: np.ndarray = field(init=False, repr=False)
    gamma: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dipoles = tuple(self.dipoles)
        if not dipoles:
            raise ConfigError("a dipole system needs at least one dipole", "system")
        object.__setattr__(self, "dipoles", dipoles)
        pos = np.array([d.position for d in dipoles])
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if np.any(dist <= MIN_SEPARATION_MM):
            i, j = np.argwhere(dist <= MIN_SEPARATION_MM)[0]
            raise ConfigError(f"dipoles {i} and {j} coincide at {pos[i].tolist()}", "system")
        for name, values in (
            ("positions", pos),
            ("axes", np.array([d.axis for d in dipoles])),
            ("omega0", np.array([d.omega0 for d in dipoles])),
            ("gamma", np.array([d.gamma for d in dipoles])),
            ("alpha", np.array([d.alpha for d in dipoles])),
        ):
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    def __len__(self):
        return len(self.dipoles)

    @property
    def dim(self) -> int:
        return 3 * len(self.dipoles)

    def replace(self, index: int, **changes) -> "DipoleSystem":
        """Copy with one dipole's fields changed (GHz keys accepted)."""
        d = self.dipoles[index]
        kw = dict(position=d.position, axis=d.axis, omega0=d.omega0, gamma=d.gamma, alpha=d.alpha)
        if "f0_ghz" in changes:
            kw["omega0"] = float(ghz_to_omega(changes.pop("f0_ghz")))
        if "gamma_ghz" in changes:
            kw["gamma"] = float(ghz_to_omega(changes.pop("gamma_ghz")))
        kw.update(changes)
        dipoles = list(self.dipoles)
        dipoles[index] = Dipole(**kw)
        return DipoleSystem(tuple(dipoles))


# -- generators ------------------------------------------------------------

def chain_positions(count: int, spacing: float, direction=(1.0, 0.0, 0.0), center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Evenly spaced points centred on ``center``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
    return np.asarray(center, dtype=float) + offsets[:, None] * u


def ring_positions(count: int, side: float, start_deg: float = 90.0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Vertices of a regular polygon in the z = 0 plane.

    ``side`` is the vertex-to-adjacent-vertex distance. The first vertex
    sits at polar angle ``start_deg`` and the rest follow anticlockwise.
    """
    if count < 2:
        raise ConfigError("a ring needs at least 2 dipoles", "system.count")
    radius = side / (2.0 * math.sin(math.pi / count))
    angles = np.deg2rad(start_deg) + 2.0 * np.pi * np.arange(count) / count
    pts = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(count)], axis=1)
    return pts + np.asarray(center, dtype=float)


_DIPOLE_KEYS = {"position", "axis", "f0_ghz", "gamma_ghz", "alpha"}


def _get(cfg: Mapping, key: str, path: str, default: Any = ...):
    if key in cfg:
        return cfg[key]
    if default is ...:
        raise ConfigError("missing required field", f"{path}.{key}" if path else key, _line(cfg, None))
    return default


def _line(cfg, key):
    lines = getattr(cfg, "lines", None)
    if not lines:
        return None
    if key is None:
        return getattr(cfg, "start_line", None)
    return lines.get(key, getattr(cfg, "start_line", None))


def _number(cfg: Mapping, key: str, path: str, default: Any = ..., positive: bool = True) -> float:
    value = _get(cfg, key, path, default)
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", f"{path}.{key}", _line(cfg, key)) from None
    if not math.isfinite(out) or (positive and out <= 0):
        raise ConfigError(f"must be {'positive and ' if positive else ''}finite, got {value!r}",
                          f"{path}.{key}", _line(cfg, key))
    return out


def _dipole_from(params: Mapping, path: str, line=None) -> Dipole:
    try:
        return Dipole.from_ghz(params["position"], params["f0_ghz"], params["gamma_ghz"],
                               params["alpha"], params.get("axis", (0.0, 0.0, 1.0)))
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.field}", line) from None
    except KeyError as exc:
        raise ConfigError("missing required field", f"{path}.{exc.args[0]}", line) from None


def build_system(config: Mapping) -> DipoleSystem:
    """Build a `DipoleSystem` from the ``system`` block of a scenario.

    Supported layouts::

        generator: chain   count, spacing_mm[, direction, center]
        generator: ring    count, side_mm[, start_deg, center]
        dipoles:           explicit list of {position, f0_ghz, gamma_ghz, alpha[, axis]}

    ``defaults`` supplies per-dipole parameters for generated layouts and
    ``overrides`` (a list of ``{index, ...}``) patches individual dipoles.
    """
    path = "system"
    if not isinstance(config, Mapping):
        raise ConfigError("expected a mapping", path)
    defaults = dict(config.get("defaults", {}) or {})
    unknown = set(defaults) - (_DIPOLE_KEYS - {"position"})
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", f"{path}.defaults", _line(config, "defaults"))
    defaults.setdefault("axis", (0.0, 0.0, 1.0))

    if "dipoles" in config:
        items = config["dipoles"]
        if not isinstance(items, Sequence) or isinstance(items, (str, bytes)):
            raise ConfigError("expected a list", f"{path}.dipoles", _line(config, "dipoles"))
        params = [{**defaults, **dict(item)} for item in items]
    else:
        kind = _get(config, "generator", path)
        count = _get(config, "count", path)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ConfigError(f"count must be an integer >= 1, got {count!r}", f"{path}.count",
                              _line(config, "count"))
        if kind == "chain":
            spacing = _number(config, "spacing_mm", path)
            pts = chain_positions(count, spacing, config.get("direction", (1, 0, 0)),
                                  config.get("center", (0, 0, 0)))
        elif kind == "ring":
            side = _number(config, "side_mm", path)
            start = _number(config, "start_deg", path, 90.0, positive=False)
            pts = ring_positions(count, side, start, config.get("center", (0, 0, 0)))
        else:
            raise ConfigError(f"unknown generator {kind!r} (expected chain or ring)", f"{path}.generator",
                              _line(config, "generator"))
        params = [{**defaults, "position": p} for p in pts]

    for k, item in enumerate(config.get("overrides", []) or []):
        opath = f"{path}.overrides[{k}]"
        idx = item.get("index")
        if not isinstance(idx, int) or not -len(params) <= idx < len(params):
            raise ConfigError(f"index {idx!r} out of range for {len(params)} dipoles", f"{opath}.index",
                              _line(item, "index"))
        patch = {key: val for key, val in item.items() if key != "index"}
        bad = set(patch) - _DIPOLE_KEYS
        if bad:
            raise ConfigError(f"unknown keys {sorted(bad)}", opath, _line(item, None))
        params[idx] = {**params[idx], **patch}

    if not params:
        raise ConfigError("a dipole system needs at least one dipole", path, _line(config, None))
    dipoles = []
    for k, p in enumerate(params):
        item_line = None
        if "dipoles" in config:
            item_line = _line(config["dipoles"], k) if hasattr(config["dipoles"], "lines") else None
        dipoles.append(_dipole_from(p, f"{path}.dipoles[{k}]", item_line))
    return DipoleSystem(tuple(dipoles))
