"""Frequency-dependent system matrices of a coupled dipole system.

Sigma is the block-diagonal discretised conductivity, M the scattering
operator relating incident and local fields (``M e = e_inc``) and L the
response matrix whose quadratic form on the incident field gives the
absorbed power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .greens import COUPLING, GreenOptions, Prefactor, green_tensor
from .linalg import FLOAT64, Backend, solve
from .model import Dipole, DipoleSystem


def sigma_scalar(dipole: Dipole, omega: float) -> complex:
    """Scalar conductivity of one dipole (epsilon_0 = 1)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    w0, g = dipole.omega0, dipole.gamma
    return dipole.alpha * w0**2 * (-1j * omega) / (w0**2 - omega**2 - 1j * omega * g)


def sigma_values(system: DipoleSystem, omega: float, backend: Backend = FLOAT64) -> np.ndarray:
    if omega <= 0:
        raise ValueError("omega must be positive")
    if not backend.extended:
        w0, g, a = system.omega0, system.gamma, system.alpha
        return a * w0**2 * (-1j * omega) / (w0**2 - omega**2 - 1j * omega * g)
    mpf = backend.ctx.mpf
    w = mpf(omega)
    out = np.empty(len(system), dtype=object)
    for i, d in enumerate(system.dipoles):
        w0, g, a = mpf(d.omega0), mpf(d.gamma), mpf(d.alpha)
        out[i] = a * w0**2 * (-1j * w) / (w0**2 - w**2 - 1j * w * g)
    return out


def _axis_dyads(system: DipoleSystem, backend: Backend) -> np.ndarray:
    ax = system.axes
    dyads = ax[:, :, None] * ax[:, None, :]
    if backend.extended:
        dyads = np.vectorize(backend.ctx.mpf, otypes=[object])(dyads)
    return dyads


def _block_diag(blocks: np.ndarray, backend: Backend) -> np.ndarray:
    n = blocks.shape[0]
    out = backend.zeros((3 * n, 3 * n))
    for i in range(n):
        out[3 * i:3 * i + 3, 3 * i:3 * i + 3] = blocks[i]
    return out


def sigma_matrix(system: DipoleSystem, omega: float, backend: Backend = FLOAT64) -> np.ndarray:
    """3N x 3N block-diagonal conductivity, blocks ``sigma_i x_i x_i``."""
    s = sigma_values(system, omega, backend)
    return _block_diag(s[:, None, None] * _axis_dyads(system, backend), backend)


def build_M(system: DipoleSystem, omega: float, opts: GreenOptions = COUPLING,
            backend: Backend = FLOAT64) -> np.ndarray:
    """Scattering operator, normalised form with the k^2 dyadic prefactor.

    Block (j, i) is ``delta_ij I - c_i G'(r_j; r_i) x_i x_i`` with
    ``c_i = -i alpha_i / (1 - w~^2 - i w~ G~)``; self blocks use a zero
    dyadic, so the diagonal blocks are exactly the identity.
    """
    opts = opts.with_prefactor(Prefactor.K_SQUARED)
    n = len(system)
    pos = system.positions
    G = green_tensor(pos, pos, omega, opts, backend, zero_self=True)
    if backend.extended:
        mpf = backend.ctx.mpf
        w = mpf(omega)
        coef = np.empty(n, dtype=object)
        for i, d in enumerate(system.dipoles):
            wt, gt = w / mpf(d.omega0), mpf(d.gamma) / mpf(d.omega0)
            coef[i] = -1j * mpf(d.alpha) / (1 - wt**2 - 1j * wt * gt)
    else:
        wt = omega / system.omega0
        gt = system.gamma / system.omega0
        coef = -1j * system.alpha / (1.0 - wt**2 - 1j * wt * gt)
    # G[j, i] @ (c_i x_i x_i)
    right = coef[:, None, None] * _axis_dyads(system, backend)
    blocks = np.matmul(G, right[None, :, :, :])
    M = backend.eye(3 * n) - blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    return M


def _sqrt_sigma_r(system: DipoleSystem, omega: float, backend: Backend) -> np.ndarray:
    """Factor F (3N x N) with F F^T = Sigma^r = Re(Sigma) / 2."""
    s = sigma_values(system, omega, backend)
    half_re = backend.real(s) / 2
    root = backend.sqrt(half_re) if backend.extended else np.sqrt(np.maximum(half_re, 0.0))
    n = len(system)
    F = backend.zeros((3 * n, n))
    ax = system.axes
    for i in range(n):
        col = ax[i] if not backend.extended else np.vectorize(backend.ctx.mpf, otypes=[object])(ax[i])
        F[3 * i:3 * i + 3, i] = root[i] * col
    return F


@dataclass(frozen=True)
class SystemMatrices:
    omega: float
    sigma: np.ndarray
    M: np.ndarray
    L: np.ndarray
    backend: Backend = FLOAT64

    @property
    def sigma_r(self) -> np.ndarray:
        return self.backend.real(self.sigma) / 2

    def total_field(self, e_incident) -> np.ndarray:
        return solve(self.M, self.backend.asarray(e_incident), backend=self.backend)


def system_matrices(system: DipoleSystem, omega: float, opts: GreenOptions = COUPLING,
                    backend: Backend = FLOAT64) -> SystemMatrices:
    """Sigma, M and L at one frequency.

    L is assembled as ``Y Y^H`` where ``M^H Y = F`` and ``F F^H`` is the
    real part of Sigma halved; M is factorised, never inverted.
    """
    M = build_M(system, omega, opts, backend)
    F = _sqrt_sigma_r(system, omega, backend)
    Y = solve(M.conj().T, F, backend=backend)
    L = Y @ Y.conj().T
    return SystemMatrices(omega, sigma_matrix(system, omega, backend), M, L, backend)


def build_L(system: DipoleSystem, omega: float, opts: GreenOptions = COUPLING,
            backend: Backend = FLOAT64) -> np.ndarray:
    return system_matrices(system, omega, opts, backend).L


def total_field(system: DipoleSystem, omega: float, e_incident, opts: GreenOptions = COUPLING) -> np.ndarray:
    """Local field at every dipole: solves ``M e = e_incident``."""
    return solve(build_M(system, omega, opts), np.asarray(e_incident, dtype=complex))


def power_from_total_field(system: DipoleSystem, omega: float, e_total) -> float:
    """Time-averaged absorbed power as an explicit sum over dipoles."""
    e = np.asarray(e_total, dtype=complex).reshape(len(system), 3)
    proj = np.einsum("ij,ij->i", e, system.axes)
    w = omega
    q2m = system.alpha * system.omega0**2
    lorentz = system.gamma / (w**2 * ((system.omega0 / w) ** 2 - 1.0) ** 2 + system.gamma**2)
    return float(np.sum(q2m / 2.0 * lorentz * np.abs(proj) ** 2))


def absorbed_power(system: DipoleSystem, omega: float, e_incident, opts: GreenOptions = COUPLING,
                   cross_check: bool = False, rtol: float = 1e-10) -> float:
    """Absorbed power for an incident field sampled at the dipoles.

    Evaluated as ``e_inc^H L e_inc``. With ``cross_check`` the per-dipole
    sum over the solved local field is computed as well and a mismatch
    beyond ``rtol`` raises ``ArithmeticError``.
    """
    e_inc = np.asarray(e_incident, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(e_inc)):
        raise ValueError("incident field must be finite")
    mats = system_matrices(system, omega, opts)
    W = float(np.real(e_inc.conj() @ mats.L @ e_inc))
    if cross_check:
        W_sum = power_from_total_field(system, omega, mats.total_field(e_inc))
        if abs(W - W_sum) > rtol * max(abs(W), abs(W_sum), np.finfo(float).tiny):
            raise ArithmeticError(f"power paths disagree: quadratic {W!r}, sum {W_sum!r}")
    return W
