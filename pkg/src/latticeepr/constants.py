"""Physical constants (SI), shared by the unit-handling modules."""

from scipy.constants import c as C                # speed of light, m/s
from scipy.constants import epsilon_0 as EPSILON_0  # vacuum permittivity, F/m
from scipy.constants import hbar as HBAR          # reduced Planck constant, J s
from scipy.constants import k as KB               # Boltzmann constant, J/K

__all__ = ["C", "EPSILON_0", "HBAR", "KB"]
