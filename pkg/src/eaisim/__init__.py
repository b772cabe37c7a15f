"""Simulator for energy absorption interferometry on coupled dipole systems."""

from .model import Dipole, DipoleSystem, ConfigError, ghz_to_omega, omega_to_ghz
from .greens import GreenOptions, Prefactor, FULL, COUPLING
from .linalg import Backend, FLOAT64

__version__ = "0.1.0"
