"""Physical constants and reference values used throughout the package (SI units)."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    Gamma_c_inf: float = 8e7          # s^-1, inverse excited-state lifetime
    gamma_gyro: float = 28e6          # Hz / mT
    sigma: float = 3e-21              # m^2, optical absorption cross section
    wavelength: float = 532e-9        # m
    planck_h: float = 6.62607015e-34  # J s
    light_c: float = 299792458.0      # m / s
    W_p_sat: float = 1.9e7            # s^-1, reference pump rate at s = 1


CONSTANTS = PhysicalConstants()

# Spin coherence decay without optical pumping, 1 / T2* with T2* = 2 us.
GAMMA2_DARK = 5e5
# Rabi angular frequency used for the reference simulations.
OMEGA_R_DEFAULT = 1.5e7
