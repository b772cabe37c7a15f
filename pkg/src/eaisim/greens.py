"""Free-space dyadic Green's function split into R^-3, R^-2 and R^-1 terms.

Time dependence is exp(-i omega t). Internal units take mu_0 = epsilon_0 = 1
for the field prefactor while the wavenumber uses k = omega / c with c in
mm/s, so only relative quantities are meaningful.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import FLOAT64, Backend
from .model import C_MM_PER_S, MIN_SEPARATION_MM


class Prefactor(enum.Enum):
    OMEGA_MU0 = "omega_mu0"  # field radiated by a current moment
    K_SQUARED = "k_squared"  # dipole-dipole coupling form


class Regime(enum.Enum):
    NEAR = "near"
    INTERMEDIATE = "intermediate"
    FAR = "far"


class SingularityError(ValueError):
    pass


@dataclass(frozen=True)
class GreenOptions:
    near: bool = True
    intermediate: bool = True
    far: bool = True
    prefactor: Prefactor = Prefactor.OMEGA_MU0

    def __post_init__(self):
        if not (self.near or self.intermediate or self.far):
            raise ValueError("at least one Green's dyadic term must be enabled")
        if isinstance(self.prefactor, str):
            object.__setattr__(self, "prefactor", Prefactor(self.prefactor))

    @classmethod
    def named(cls, name: str, prefactor: Prefactor = Prefactor.OMEGA_MU0) -> "GreenOptions":
        """``'full'``, ``'near'``, ``'intermediate'`` or ``'far'``."""
        flags = {
            "full": (True, True, True),
            "near": (True, False, False),
            "intermediate": (False, True, False),
            "far": (False, False, True),
        }
        try:
            n, i, f = flags[name]
        except KeyError:
            raise ValueError(f"unknown Green's option {name!r}; expected one of {sorted(flags)}") from None
        return cls(n, i, f, prefactor)

    def with_prefactor(self, prefactor: Prefactor) -> "GreenOptions":
        return GreenOptions(self.near, self.intermediate, self.far, prefactor)

    @property
    def label(self) -> str:
        on = [n for n, flag in (("near", self.near), ("intermediate", self.intermediate), ("far", self.far)) if flag]
        return "full" if len(on) == 3 else "+".join(on)


FULL = GreenOptions()
COUPLING = GreenOptions(prefactor=Prefactor.K_SQUARED)


def green_tensor(r_obs, r_src, omega, opts: GreenOptions = FULL, backend: Backend = FLOAT64,
                 zero_self: bool = False) -> np.ndarray:
    """Dyadic for every (observation, source) pair.

    Parameters
    ----------
    r_obs : array (N, 3)
    r_src : array (M, 3)
    omega : float
        Angular frequency in rad/s.
    zero_self : bool
        Coincident pairs give the zero dyadic instead of raising. Used
        when assembling the scattering operator, which has no self term.

    Returns
    -------
    array (N, M, 3, 3)
    """
    r_obs = np.atleast_2d(np.asarray(r_obs, dtype=float))
    r_src = np.atleast_2d(np.asarray(r_src, dtype=float))
    dR = r_obs[:, None, :] - r_src[None, :, :]
    dist = np.linalg.norm(dR, axis=-1)
    self_mask = dist <= MIN_SEPARATION_MM
    if np.any(self_mask):
        if not zero_self:
            raise SingularityError("Green's dyadic is singular at zero separation")
        dR = np.where(self_mask[..., None], np.array([1.0, 0.0, 0.0]), dR)

    xp = backend
    if xp.extended:
        dR = np.vectorize(xp.ctx.mpf, otypes=[object])(dR)
        omega = xp.real_scalar(omega)
        c = xp.real_scalar(C_MM_PER_S)
        four_pi = 4 * xp.ctx.pi
    else:
        c = C_MM_PER_S
        four_pi = 4.0 * np.pi
    k = omega / c
    R2 = (dR * dR).sum(axis=-1)
    R = xp.sqrt(R2)
    kR = k * R
    g = xp.exp(1j * kR) / (four_pi * R)
    pref = omega if opts.prefactor is Prefactor.OMEGA_MU0 else k * k

    RR = dR[..., :, None] * dR[..., None, :] / R2[..., None, None]
    eye = np.eye(3)
    static = eye - 3 * RR
    out = xp.zeros(dR.shape[:-1] + (3, 3))
    if opts.near:
        out = out + (-1j * pref * g / (kR * kR))[..., None, None] * static
    if opts.intermediate:
        out = out + (1j * pref * g * (1j / kR))[..., None, None] * static
    if opts.far:
        out = out + (1j * pref * g)[..., None, None] * (eye - RR)
    if np.any(self_mask):
        out[self_mask] = xp.zeros((3, 3))
    return out


def green_dyadic(r_obs, r_src, omega: float, opts: GreenOptions = FULL) -> np.ndarray:
    """3x3 dyadic mapping a current moment at ``r_src`` to the field at ``r_obs``."""
    return green_tensor(np.reshape(r_obs, (1, 3)), np.reshape(r_src, (1, 3)), omega, opts)[0, 0]


def kr_regime(r_obs, r_src, omega: float) -> Regime:
    """Diagnostic classification of the separation in wavelengths."""
    R = float(np.linalg.norm(np.asarray(r_obs, float) - np.asarray(r_src, float)))
    if R <= 0:
        raise SingularityError("zero separation")
    lam = 2.0 * np.pi * C_MM_PER_S / omega
    if R < lam:
        return Regime.NEAR
    if R < 10.0 * lam:
        return Regime.INTERMEDIATE
    return Regime.FAR
