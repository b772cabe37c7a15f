"""Sweep drivers: spectra, single-probe scans, visibility curves, mode tracking."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..assembly import system_matrices
from ..greens import COUPLING, GreenOptions
from ..interferometry import DegenerateVisibilityError, ModeSet, Probe, probe_matrix
from ..linalg import FLOAT64, Backend
from ..model import DipoleSystem, ghz_to_omega


@dataclass(frozen=True)
class Peak:
    f_ghz: float
    height: float
    fwhm_ghz: float | None = None


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _probe_powers(system, omega, probes, opts, backend):
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix(probes, system, omega, backend)
    W = (g.conj() * (mats.L @ g)).sum(axis=0)
    return backend.to_real(W)


def spectrum_sweep(system: DipoleSystem, probe: Probe, freqs_ghz: Sequence[float],
                   opts: GreenOptions = COUPLING, threads: int = 1,
                   backend: Backend = FLOAT64) -> np.ndarray:
    """Absorbed power from one probe at each frequency; returns ``(f, W)`` rows."""
    freqs = np.asarray(freqs_ghz, dtype=float)
    W = _map(lambda f: _probe_powers(system, ghz_to_omega(f), [probe], opts, backend)[0], freqs, threads)
    return np.column_stack([freqs, np.asarray(W, dtype=float)])


def _half_max_width(f: np.ndarray, W: np.ndarray, i: int, height: float) -> float | None:
    half = height / 2.0
    left = i
    while left > 0 and W[left] > half:
        left -= 1
    right = i
    while right < len(W) - 1 and W[right] > half:
        right += 1
    if W[left] > half or W[right] > half:
        return None

    def cross(a, b):
        return f[a] + (half - W[a]) * (f[b] - f[a]) / (W[b] - W[a])

    return float(cross(right - 1, right) - cross(left, left + 1))


def find_peaks(table: np.ndarray, min_relative: float = 0.0) -> list[Peak]:
    """Interior local maxima refined by a parabola through the three nearest samples.

    ``min_relative`` discards maxima lower than that fraction of the
    highest one. Widths are full width at half maximum by linear
    interpolation, or ``None`` when a side never drops to half height.
    """
    f, W = np.asarray(table[:, 0], float), np.asarray(table[:, 1], float)
    peaks = []
    for i in range(1, len(W) - 1):
        if W[i] > W[i - 1] and W[i] >= W[i + 1]:
            y0, y1, y2 = W[i - 1], W[i], W[i + 1]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            h = f[i + 1] - f[i]
            fp = f[i] + shift * h
            height = y1 - 0.25 * (y0 - y2) * shift
            peaks.append(Peak(float(fp), float(height), _half_max_width(f, W, i, height)))
    if peaks and min_relative > 0:
        top = max(p.height for p in peaks)
        peaks = [p for p in peaks if p.height >= min_relative * top]
    return peaks


def line_scan(system: DipoleSystem, path: Sequence[Probe], f_ghz: float, opts: GreenOptions = COUPLING,
              backend: Backend = FLOAT64) -> np.ndarray:
    """Single-probe absorbed power along a probe path; returns ``(x, y, z, W)`` rows."""
    W = _probe_powers(system, ghz_to_omega(f_ghz), list(path), opts, backend)
    pos = np.array([p.position for p in path])
    return np.column_stack([pos, W])


def visibility_scan(system: DipoleSystem, path: Sequence[Probe], reference: Probe, f_ghz: float,
                    opts: GreenOptions = COUPLING, backend: Backend = FLOAT64) -> np.ndarray:
    """Complex visibility between a fixed reference probe and each probe on a path.

    Returns rows ``(x, y, z, |gamma|, arg gamma in degrees)``.
    """
    omega = ghz_to_omega(f_ghz)
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix([reference, *path], system, omega, backend)
    Lg = mats.L @ g
    h_ref = backend.to_complex(g[:, :1].conj().T @ Lg)[0]
    h_diag = backend.to_real((g.conj() * Lg).sum(axis=0))
    denom = h_diag[0] + h_diag[1:]
    if np.any(denom <= 0):
        raise DegenerateVisibilityError("no absorbed power for some probe pair")
    gamma = 2.0 * h_ref[1:] / denom
    pos = np.array([p.position for p in path])
    return np.column_stack([pos, np.abs(gamma), np.degrees(np.angle(gamma))])


def response_eigenvalues(system: DipoleSystem, f_ghz: float, opts: GreenOptions = COUPLING,
                         backend: Backend = FLOAT64) -> np.ndarray:
    """Eigenvalues of L, descending."""
    L = backend.to_complex(system_matrices(system, ghz_to_omega(f_ghz), opts, backend).L)
    return np.linalg.eigvalsh((L + L.conj().T) / 2)[::-1]


def mode_resonances(system: DipoleSystem, modes: ModeSet, freqs_ghz: Sequence[float],
                    opts: GreenOptions = COUPLING, threads: int = 1) -> np.ndarray:
    """Frequency at which each mode's field pattern absorbs most strongly.

    Each mode's unit field vector ``u`` is held fixed while
    ``u^H L(f) u`` is tracked across the grid; the peak is refined by a
    parabola. Used to label modes found at one frequency with the
    spectral feature they belong to.
    """
    freqs = np.asarray(freqs_ghz, float)
    U = modes.field_modes

    def quad(f):
        L = system_matrices(system, ghz_to_omega(f), opts).L
        return np.real(np.einsum("im,ij,jm->m", U.conj(), L, U))

    curves = np.array(_map(quad, freqs, threads))  # (F, modes)
    out = []
    for m in range(curves.shape[1]):
        i = int(np.argmax(curves[:, m]))
        if 0 < i < len(freqs) - 1:
            y0, y1, y2 = curves[i - 1:i + 2, m]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            out.append(freqs[i] + shift * (freqs[i + 1] - freqs[i]))
        else:
            out.append(freqs[i])
    return np.array(out)


def mode_form(modes: ModeSet, use: str = "field_modes") -> np.ndarray:
    """Per-site z components of each mode, shape (N, modes).

    ``field_modes`` gives the eigenvectors of L (the pattern of local
    field the structure is sensitive to); ``dipole_moments`` gives the
    induced moments when that field pattern is applied.
    """
    if use not in ("field_modes", "dipole_moments"):
        raise ValueError(f"unknown mode representation {use!r}")
    return getattr(modes, use)[2::3, :]


def localization(modes: ModeSet, sites: Sequence[int], use: str = "field_modes") -> np.ndarray:
    """Fraction of each mode's norm carried by ``sites``."""
    full = np.abs(getattr(modes, use)) ** 2
    n = full.shape[0] // 3
    per_site = full.reshape(n, 3, -1).sum(axis=1)
    return per_site[list(sites)].sum(axis=0) / per_site.sum(axis=0)


def zero_crossings(values: Sequence[float]) -> int:
    v = np.asarray(values, float)
    v = v[v != 0]
    return int(np.sum(np.signbit(v[1:]) != np.signbit(v[:-1])))
