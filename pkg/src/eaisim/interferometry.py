"""Two-source absorption interferometry on a dipole system.

Point current probes illuminate the system; the absorbed power as the
differential phase of a probe pair rotates is a fringe whose first
harmonic is the off-diagonal element of the probe-space response matrix
H. Diagonalising H, or the dipole-space matrix recovered from it by
removing the probe beam patterns with a pseudo-inverse, yields the
absorption modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .assembly import SystemMatrices, system_matrices
from .greens import COUPLING, FULL, GreenOptions, Prefactor, SingularityError, green_tensor
from .linalg import FLOAT64, Backend, eig_hermitian, fix_phase, pinv, solve
from .model import MIN_SEPARATION_MM, DipoleSystem


class PartialRecoveryWarning(UserWarning):
    """The probe set cannot resolve every requested mode."""

    def __init__(self, message: str, rank: int, needed: int):
        super().__init__(message)
        self.rank = rank
        self.needed = needed


class DegenerateVisibilityError(ValueError):
    pass


@dataclass(frozen=True)
class Probe:
    """Point current source with a unit current moment."""

    position: np.ndarray
    polarization: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    green_opts: GreenOptions = FULL

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(3)
        pol = np.array(self.polarization, dtype=float).reshape(3)
        n = np.linalg.norm(pol)
        if n == 0 or not np.all(np.isfinite(pol)) or not np.all(np.isfinite(pos)):
            raise ValueError("probe needs a finite position and a non-zero polarization")
        pol = pol / n
        pos.setflags(write=False)
        pol.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "polarization", pol)
        object.__setattr__(self, "green_opts", self.green_opts.with_prefactor(Prefactor.OMEGA_MU0))

    def same_as(self, other: "Probe") -> bool:
        return bool(np.allclose(self.position, other.position, atol=1e-12, rtol=0)
                    and np.allclose(self.polarization, other.polarization, atol=1e-12, rtol=0))


class ProbeSet(tuple):
    """Ordered, duplicate-free sequence of probes."""

    def __new__(cls, probes: Iterable[Probe]):
        probes = tuple(probes)
        for i, a in enumerate(probes):
            for j in range(i):
                if a.same_as(probes[j]):
                    raise ValueError(f"probes {j} and {i} are identical")
        return super().__new__(cls, probes)

    @classmethod
    def from_points(cls, points, polarization=(0.0, 0.0, 1.0), green_opts: GreenOptions = FULL) -> "ProbeSet":
        return cls(Probe(p, polarization, green_opts) for p in np.atleast_2d(points))

    @classmethod
    def line(cls, start, stop, count: int, polarization=(0.0, 0.0, 1.0),
             green_opts: GreenOptions = FULL) -> "ProbeSet":
        pts = np.linspace(np.asarray(start, float), np.asarray(stop, float), count)
        return cls.from_points(pts, polarization, green_opts)

    @classmethod
    def circle(cls, radius: float, count: int, start_deg: float = 0.0, step_deg: float | None = None,
               center=(0.0, 0.0, 0.0), polarization=(0.0, 0.0, 1.0),
               green_opts: GreenOptions = FULL) -> "ProbeSet":
        step = 360.0 / count if step_deg is None else step_deg
        ang = np.deg2rad(start_deg + step * np.arange(count))
        pts = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(count)], axis=1)
        return cls.from_points(pts + np.asarray(center, float), polarization, green_opts)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self]).reshape(-1, 3)

    def with_green_opts(self, opts: GreenOptions) -> "ProbeSet":
        return ProbeSet(Probe(p.position, p.polarization, opts) for p in self)

    def subset(self, indices) -> "ProbeSet":
        return ProbeSet(self[i] for i in indices)


@dataclass(frozen=True)
class HMatrix:
    """Probe-space response matrix.

    ``data`` is complex128, or an object array of mpmath numbers when it
    was produced by an extended-precision backend.
    """

    data: np.ndarray
    provenance: str  # "direct" or "fringe"
    backend: Backend = FLOAT64

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def values(self) -> np.ndarray:
        """complex128 view."""
        return self.backend.to_complex(self.data)

    def amplitudes(self) -> np.ndarray:
        return np.abs(self.values)

    def phases_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.values))

    def submatrix(self, indices) -> "HMatrix":
        idx = np.asarray(indices)
        return HMatrix(self.data[np.ix_(idx, idx)], self.provenance, self.backend)


@dataclass(frozen=True)
class ModeSet:
    """Absorption modes, strongest first.

    ``field_modes`` are unit eigenvectors over the 3N local-field space,
    ``dipole_moments`` the corresponding unit-normalised dipole-moment
    patterns, and ``source_modes`` the probe-space eigenvectors when the
    modes came from diagonalising H.
    """

    eigenvalues: np.ndarray
    field_modes: np.ndarray
    dipole_moments: np.ndarray
    source_modes: np.ndarray | None = None
    rank: int | None = None

    def __len__(self):
        return len(self.eigenvalues)

    def z_moments(self) -> np.ndarray:
        """Dipole-moment z components, shape (N, modes)."""
        return self.dipole_moments[2::3, :]


# -- probe fields ------------------------------------------------------------

def _probe_columns(probes: Sequence[Probe], system: DipoleSystem, omega: float,
                   backend: Backend) -> np.ndarray:
    n = len(system)
    cols = backend.zeros((3 * n, len(probes)))
    groups: dict[GreenOptions, list[int]] = {}
    for s, p in enumerate(probes):
        groups.setdefault(p.green_opts, []).append(s)
    for opts, idx in groups.items():
        pos = np.array([probes[s].position for s in idx])
        dist = np.linalg.norm(system.positions[:, None, :] - pos[None, :, :], axis=-1)
        if np.any(dist <= MIN_SEPARATION_MM):
            d, s = np.argwhere(dist <= MIN_SEPARATION_MM)[0]
            raise SingularityError(f"probe {idx[s]} coincides with dipole {d}")
        G = green_tensor(system.positions, pos, omega, opts, backend)  # (N, S, 3, 3)
        pol = np.array([probes[s].polarization for s in idx])
        if backend.extended:
            pol = np.vectorize(backend.ctx.mpf, otypes=[object])(pol)
        fields = (G * pol[None, :, None, :]).sum(axis=-1)  # (N, S, 3)
        cols[:, idx] = fields.transpose(0, 2, 1).reshape(3 * n, len(idx))
    return cols


def probe_field(probe: Probe, system: DipoleSystem, omega: float, backend: Backend = FLOAT64) -> np.ndarray:
    """Incident field at every dipole from a unit current moment at the probe."""
    return _probe_columns([probe], system, omega, backend)[:, 0]


def probe_matrix(probes: Sequence[Probe], system: DipoleSystem, omega: float,
                 backend: Backend = FLOAT64) -> np.ndarray:
    """Source Green's matrix G^P, one column per probe (3N x S)."""
    return _probe_columns(list(probes), system, omega, backend)


# -- fringes -----------------------------------------------------------------

def _phase_grid(steps: int) -> np.ndarray:
    if steps < 4:
        raise ValueError("a fringe needs at least 4 phase steps")
    return 2.0 * np.pi * np.arange(steps) / steps


def _forward_powers(mats: SystemMatrices, incident: np.ndarray, backend: Backend) -> np.ndarray:
    """Absorbed power for each incident-field column by full forward solves."""
    e = solve(mats.M, incident, backend=backend)
    sr = mats.sigma_r
    W = (e.conj() * (sr @ e)).sum(axis=0)
    return W


def _lift_phases(phases: np.ndarray, backend: Backend):
    if not backend.extended:
        return np.exp(1j * phases)
    ctx = backend.ctx
    steps = len(phases)
    return np.array([ctx.expjpi(ctx.mpf(2 * k) / steps) for k in range(steps)], dtype=object)


def fringe_sweep(system: DipoleSystem, omega: float, opts: GreenOptions, probe_a: Probe, probe_b: Probe,
                 phase_steps: int = 16, noise_snr: float | None = None,
                 rng: np.random.Generator | None = None, backend: Backend = FLOAT64):
    """Absorbed power as the phase of ``probe_b`` relative to ``probe_a`` turns.

    Each sample is a full forward solve for the combined incident field.
    Returns a list of ``(delta_phi, W)`` pairs.
    """
    phases = _phase_grid(phase_steps)
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix([probe_a, probe_b], system, omega, backend)
    rot = _lift_phases(phases, backend)
    incident = g[:, [0]] + g[:, [1]] * rot[None, :]
    W = backend.to_real(_forward_powers(mats, incident, backend))
    if noise_snr is not None:
        W = _add_noise(W, noise_snr, rng)
    return list(zip(phases.tolist(), W.tolist()))


def _add_noise(W: np.ndarray, snr: float, rng: np.random.Generator | None) -> np.ndarray:
    if snr <= 0:
        raise ValueError("noise SNR must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    scale = np.mean(np.abs(W)) / snr
    return W + rng.normal(0.0, scale, size=W.shape)


def extract_fringe(sweep, backend: Backend = FLOAT64):
    """Split a uniformly sampled fringe into its DC level and H_ab.

    ``W(dphi) = H_aa + H_bb + H_ab e^{i dphi} + conj(H_ab) e^{-i dphi}``, so
    the DC term is ``H_aa + H_bb`` and the first Fourier coefficient
    ``mean(W e^{-i dphi})`` is ``H_ab``.
    """
    phases = np.array([p for p, _ in sweep], dtype=float)
    W = np.array([w for _, w in sweep], dtype=object if backend.extended else float)
    steps = len(phases)
    grid = _phase_grid(steps)
    if not np.allclose(phases, grid, atol=1e-12, rtol=0):
        raise ValueError("fringe samples must lie on a uniform phase grid starting at 0")
    rot = _lift_phases(grid, backend)
    dc = W.sum() / steps
    h_ab = (W * np.conj(rot)).sum() / steps
    return dc, h_ab


def measure_H(system: DipoleSystem, omega: float, probes: Sequence[Probe], opts: GreenOptions = COUPLING,
              phase_steps: int = 16, noise_snr: float | None = None,
              rng: np.random.Generator | None = None, backend: Backend = FLOAT64) -> HMatrix:
    """Populate H from simulated power measurements only.

    Diagonal entries are single-source powers; each off-diagonal pair comes
    from a phase-rotated fringe. All forward solves for all pairs share one
    factorisation of M.
    """
    S = len(probes)
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix(list(probes), system, omega, backend)
    phases = _phase_grid(phase_steps)
    rot = _lift_phases(phases, backend)
    pairs = [(a, b) for a in range(S) for b in range(a + 1, S)]
    cols = [g]
    for a, b in pairs:
        cols.append(g[:, [a]] + g[:, [b]] * rot[None, :])
    incident = np.concatenate(cols, axis=1)
    W = _forward_powers(mats, incident, backend)
    W = backend.real(W)
    if noise_snr is not None:
        W = _add_noise(np.asarray(W, dtype=float), noise_snr, rng)

    H = backend.zeros((S, S))
    for a in range(S):
        H[a, a] = backend.scalar(0) + W[a]
    offset = S
    for a, b in pairs:
        samples = W[offset:offset + phase_steps]
        offset += phase_steps
        _, h_ab = extract_fringe(list(zip(phases, samples)), backend)
        H[a, b] = h_ab
        H[b, a] = np.conj(h_ab)
    H = (H + H.conj().T) / 2
    return HMatrix(H, "fringe", backend)


def direct_H(system: DipoleSystem, omega: float, probes: Sequence[Probe], opts: GreenOptions = COUPLING,
             backend: Backend = FLOAT64) -> HMatrix:
    """``G^P^H L G^P`` evaluated algebraically."""
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix(list(probes), system, omega, backend)
    H = g.conj().T @ mats.L @ g
    return HMatrix((H + H.conj().T) / 2, "direct", backend)


def visibility(H: HMatrix | np.ndarray, n: int, n_prime: int) -> complex:
    """Complex fringe visibility ``2 H_nn' / (H_nn + H_n'n')``."""
    data = H.values if isinstance(H, HMatrix) else np.asarray(H)
    denom = (data[n, n] + data[n_prime, n_prime]).real
    if denom <= 0:
        raise DegenerateVisibilityError(f"no absorbed power for probes {n} and {n_prime}")
    return complex(2.0 * data[n, n_prime] / denom)


def visibility_row(H: HMatrix | np.ndarray, reference: int) -> np.ndarray:
    data = H.values if isinstance(H, HMatrix) else np.asarray(H)
    d = np.real(np.diag(data))
    denom = d[reference] + d
    if np.any(denom <= 0):
        raise DegenerateVisibilityError("no absorbed power for some probe pair")
    return 2.0 * data[reference, :] / denom


# -- modes -------------------------------------------------------------------

def _dipole_moments(mats: SystemMatrices, fields: np.ndarray, backend: Backend) -> np.ndarray:
    """``(1 / -i w) Sigma M^-1 u`` for each column ``u``, normalised."""
    if fields.shape[1] == 0:
        return backend.to_complex(fields)
    x = solve(mats.M, fields, backend=backend)
    p = (mats.sigma @ x) / (-1j * backend.real_scalar(mats.omega))
    p = backend.to_complex(p)
    norms = np.linalg.norm(p, axis=0)
    norms[norms == 0] = 1.0
    return fix_phase(p / norms)


def _finish(values, vectors, mats, backend, n_modes, source_modes=None, rank=None) -> ModeSet:
    vals = backend.to_real(values)[:n_modes]
    U = vectors[:, :n_modes]
    p = _dipole_moments(mats, U, backend)
    U = fix_phase(backend.to_complex(U))
    return ModeSet(vals, U, p, source_modes, rank)


def direct_modes(system: DipoleSystem, omega: float, opts: GreenOptions = COUPLING,
                 n_modes: int | None = None, backend: Backend = FLOAT64) -> ModeSet:
    """Modes from diagonalising L directly; ``n_modes`` defaults to N."""
    n_modes = len(system) if n_modes is None else n_modes
    mats = system_matrices(system, omega, opts, backend)
    eig = eig_hermitian(mats.L, symmetrize=True, backend=backend)
    return _finish(eig.eigenvalues, eig.eigenvectors, mats, backend, n_modes, rank=len(system))


def recover_modes(H: HMatrix, probes: Sequence[Probe], system: DipoleSystem, omega: float,
                  opts: GreenOptions = COUPLING, rel_tol: float = 1e-10, n_modes: int | None = None,
                  backend: Backend | None = None) -> ModeSet:
    """Deconvolve probe beam patterns from H and diagonalise.

    ``L_rec = pinv(G^P)^H H pinv(G^P)``. A `PartialRecoveryWarning` is
    issued when the numerical rank of G^P is below ``n_modes``.
    """
    backend = H.backend if backend is None else backend
    n_modes = len(system) if n_modes is None else n_modes
    if H.size != len(probes):
        raise ValueError(f"H is {H.size}x{H.size} but {len(probes)} probes were given")
    mats = system_matrices(system, omega, opts, backend)
    g = probe_matrix(list(probes), system, omega, backend)
    P = pinv(g, rel_tol, backend)
    if P.rank < n_modes:
        warnings.warn(PartialRecoveryWarning(
            f"probe matrix has numerical rank {P.rank}; {n_modes} modes requested", P.rank, n_modes),
            stacklevel=2)
    data = backend.asarray(H.data)
    L_rec = P.matrix.conj().T @ data @ P.matrix
    eig = eig_hermitian(L_rec, symmetrize=True, backend=backend)
    h_eig = eig_hermitian(data, symmetrize=True, backend=backend)
    w = backend.to_complex(h_eig.eigenvectors[:, :n_modes])
    return _finish(eig.eigenvalues, eig.eigenvectors, mats, backend, n_modes, w, P.rank)


# -- comparison --------------------------------------------------------------

def eigenvalue_clusters(values: Sequence[float], rel_gap: float = 1e-6) -> list[list[int]]:
    """Group consecutive (sorted) eigenvalues whose relative gap is below ``rel_gap``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    clusters = [[0]]
    for i in range(1, len(values)):
        a, b = values[i - 1], values[i]
        scale = max(abs(a), abs(b))
        if scale == 0 or abs(a - b) <= rel_gap * scale:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


@dataclass(frozen=True)
class ModeComparison:
    clusters: list[list[int]]
    angles: list[float]  # largest principal angle per cluster, radians
    eigenvalue_error: float  # max |d lambda| / lambda_max

    @property
    def max_angle(self) -> float:
        return max(self.angles) if self.angles else 0.0


def compare_modes(reference: ModeSet, other: ModeSet, cluster_tol: float = 1e-6,
                  use: str = "field_modes") -> ModeComparison:
    """Principal angles between corresponding eigenvalue clusters.

    Clusters are formed from the reference eigenvalues, so degenerate
    pairs (ring modes) are compared as 2-D subspaces.
    """
    m = min(len(reference), len(other))
    A = getattr(reference, use)[:, :m]
    B = getattr(other, use)[:, :m]
    clusters = eigenvalue_clusters(reference.eigenvalues[:m], cluster_tol)
    angles = [float(np.max(subspace_angles(A[:, c], B[:, c]))) for c in clusters]
    lam = np.asarray(reference.eigenvalues[:m])
    scale = float(np.max(np.abs(lam))) if m else 1.0
    err = float(np.max(np.abs(lam - np.asarray(other.eigenvalues[:m])))) / scale if m else 0.0
    return ModeComparison(clusters, angles, err)


def convergence_study(system: DipoleSystem, omega: float, probes: Sequence[Probe] | Callable[[int], Sequence[Probe]],
                      max_probes: int, opts: GreenOptions = COUPLING, rel_tol: float = 1e-10,
                      start: int = 2, measure: str = "direct", cluster_tol: float = 1e-6,
                      backend: Backend = FLOAT64) -> list[tuple[int, float]]:
    """Recovery error against direct diagonalisation as probes are added.

    ``probes`` is either an ordered probe set (the first S are used at
    step S, so H is measured once and sub-blocked) or a callable returning
    a fresh probe set of size S.
    """
    reference = direct_modes(system, omega, opts, backend=backend)
    measure_fn = {"direct": direct_H, "fringe": measure_H}[measure]
    out = []
    if callable(probes):
        sets = {S: probes(S) for S in range(start, max_probes + 1)}
        full_H = None
    else:
        if len(probes) < max_probes:
            raise ValueError(f"only {len(probes)} probes available, {max_probes} requested")
        full_H = measure_fn(system, omega, list(probes)[:max_probes], opts, backend=backend)
        sets = {S: ProbeSet(list(probes)[:S]) for S in range(start, max_probes + 1)}
    for S, pset in sets.items():
        H = full_H.submatrix(range(S)) if full_H is not None else measure_fn(system, omega, pset, opts,
                                                                             backend=backend)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PartialRecoveryWarning)
            rec = recover_modes(H, pset, system, omega, opts, rel_tol, backend=backend)
        out.append((S, compare_modes(reference, rec, cluster_tol).max_angle))
    return out


def plateau_start(study: Sequence[tuple[int, float]], threshold: float) -> int | None:
    """Smallest S from which every later error is below ``threshold``."""
    first = None
    for S, err in study:
        if err < threshold:
            if first is None:
                first = S
        else:
            first = None
    return first
