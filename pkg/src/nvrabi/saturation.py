"""Optical saturation and the characteristic times of pumping and relaxation."""

from __future__ import annotations

import math

import numpy as np

from .constants import CONSTANTS, GAMMA2_DARK
from .model import (
    N7,
    DriveParams,
    TransitionRates,
    excited_population,
    gamma_c,
    ground_polarization,
    integrate,
    steady_state,
    thermal_state,
)


class ThresholdNotReached(ArithmeticError):
    pass


def saturation_scan(rates: TransitionRates, W_p_list) -> np.ndarray:
    """Stationary excited-state population for each pump rate; rows are (W_p, n_E)."""
    W = np.asarray(W_p_list, dtype=float)
    if W.ndim != 1 or len(W) == 0:
        raise ValueError("W_p_list must be a non-empty 1-D sequence")
    if np.any(W < 0):
        raise ValueError("pump rates must be >= 0")
    nE = [excited_population(steady_state(rates, DriveParams(W_p=w))) for w in W]
    return np.column_stack([W, nE])


def default_scan_grid(W_p_sat_guess: float = CONSTANTS.W_p_sat, n: int = 61) -> np.ndarray:
    """Logarithmic pump-rate grid from 1e-3 to 1e2 times the expected saturation rate."""
    return W_p_sat_guess * np.logspace(-3, 2, n)


def saturation_intensity(W_p_sat: float, sigma: float = CONSTANTS.sigma,
                         wavelength: float = CONSTANTS.wavelength,
                         h: float = CONSTANTS.planck_h, c: float = CONSTANTS.light_c) -> float:
    """Saturation intensity in W/m^2 (1 mW/um^2 = 1e9 W/m^2)."""
    _positive(W_p_sat=W_p_sat, sigma=sigma, wavelength=wavelength)
    return W_p_sat * c * h / (sigma * wavelength)


def saturation_power(I_sat: float, w0: float) -> float:
    """Saturation power in W for a Gaussian beam of waist ``w0`` (m)."""
    _positive(I_sat=I_sat, w0=w0)
    return math.pi * w0**2 / 2 * I_sat


def saturation_parameter(P: float, P_sat: float) -> float:
    _positive(P=P, P_sat=P_sat)
    return P / P_sat


def _positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v!r}")


def _first_crossing(state, rates, drive, dt, horizon, signal, chunk=1e-6):
    """Integrate until ``signal(states)`` first turns non-negative.

    Returns the crossing time, linearly interpolated between grid points.
    """
    t0 = 0.0
    prev_t, prev_v = 0.0, float(signal(state[None, :])[0])
    if prev_v >= 0:
        return 0.0
    while t0 < horizon:
        state, tr = integrate(state, rates, drive, chunk, dt)
        v = signal(tr.states)
        hit = np.nonzero(v >= 0)[0]
        if len(hit):
            i = hit[0]
            if i == 0:
                t1, v1 = prev_t, prev_v
            else:
                t1, v1 = t0 + tr.t[i - 1], v[i - 1]
            t2, v2 = t0 + tr.t[i], v[i]
            return float(t1 + (t2 - t1) * (-v1) / (v2 - v1))
        prev_t, prev_v = t0 + tr.t[-1], float(v[-1])
        t0 += chunk
    raise ThresholdNotReached(f"threshold not reached within {horizon:.3g} s")


def depletion_time(rates: TransitionRates, s: float = 0.1, dt: float = 1e-9,
                   horizon: float = 100e-6, W_p_sat: float = CONSTANTS.W_p_sat,
                   gamma2: float = GAMMA2_DARK) -> float:
    """Time for the metastable population to fall to 1/e after the laser is switched off.

    The system starts in the stationary state under pumping at ``s``.
    """
    start = steady_state(rates, DriveParams(W_p=s * W_p_sat))
    n7_0 = start[N7]
    if n7_0 <= 0:
        raise ValueError("metastable level is empty under pumping")
    return _first_crossing(start, rates, DriveParams(0.0, 0.0, gamma2), dt, horizon,
                           lambda st: n7_0 / math.e - st[:, N7])


def polarization_time(rates: TransitionRates, s: float = 0.1, threshold: float = 0.99,
                      dt: float = 1e-9, horizon: float = 100e-6,
                      W_p_sat: float = CONSTANTS.W_p_sat) -> float:
    """Time under continuous pumping for n1 / (n1 + n2 + n3) to reach
    ``threshold`` times its stationary value, starting from the thermal state."""
    drive = DriveParams(W_p=s * W_p_sat, Gamma_2=gamma_c(s))
    target = threshold * ground_polarization(steady_state(rates, drive))
    return _first_crossing(thermal_state(), rates, drive, dt, horizon,
                           lambda st: ground_polarization(st) - target)
