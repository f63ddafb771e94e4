"""Physical constants and unit conversions used across the simulator.

Units policy: lengths in Å, energies in meV, times in ps, fields in tesla,
temperatures in kelvin.
"""
import math

# CODATA 2018
BOHR_RADIUS_ANGSTROM = 0.529177210903
RYDBERG_EV = 13.605693122994
HBAR_MEV_PS = 0.6582119569
BOHR_MAGNETON_MEV_PER_T = 0.05788381806
BOLTZMANN_MEV_PER_K = 0.08617333262
HC_EV_NM = 1239.8419843320025

# e^2 / (4 pi eps0) = 2 Ry a0, in meV·Å
COULOMB_MEV_ANGSTROM = 2.0 * RYDBERG_EV * BOHR_RADIUS_ANGSTROM * 1000.0

# Diamond
DIAMOND_LATTICE_CONSTANT = 3.567
DIAMOND_DIELECTRIC_CONSTANT = 5.7

# NV- zero-phonon line
NV_ZPL_NM = 637.0

EV_TO_MEV = 1000.0

PI = math.pi


def wavelength_to_mev(wavelength_nm):
    """Photon energy in meV for a vacuum wavelength in nm."""
    return HC_EV_NM / wavelength_nm * EV_TO_MEV
