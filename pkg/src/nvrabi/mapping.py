"""RF field profiles from per-pixel Rabi contrast stacks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import CONSTANTS
from .spectral import SpectralPeakError, fft_rabi_frequency


@dataclass
class ContrastStack:
    """Contrast sampled on an (x, y, tau) grid.

    ``contrast`` has shape (nx, ny, ntau). Pixel positions are
    ``index * um_per_pixel``; RF durations are ``tau_start + k * tau_step``.
    """

    contrast: np.ndarray
    um_per_pixel: float
    tau_start: float
    tau_step: float

    def __post_init__(self):
        self.contrast = np.asarray(self.contrast)
        if self.contrast.ndim != 3:
            raise ValueError("contrast must be a 3-D (x, y, tau) array")
        if min(self.contrast.shape) < 1:
            raise ValueError(f"empty stack, shape {self.contrast.shape}")
        if not (self.um_per_pixel > 0 and self.tau_step > 0 and self.tau_start >= 0):
            raise ValueError("um_per_pixel and tau_step must be > 0, tau_start >= 0")

    @property
    def shape(self):
        return self.contrast.shape

    @property
    def x_positions(self) -> np.ndarray:
        return np.arange(self.shape[0]) * self.um_per_pixel

    @property
    def y_positions(self) -> np.ndarray:
        return np.arange(self.shape[1]) * self.um_per_pixel

    @property
    def tau_values(self) -> np.ndarray:
        return self.tau_start + np.arange(self.shape[2]) * self.tau_step


@dataclass
class FieldProfile:
    x_positions: np.ndarray  # um
    nu_R: np.ndarray         # Hz, NaN where no frequency could be extracted
    B_R: np.ndarray          # mT


def b_field_from_rabi(nu_R, gamma_gyro: float = CONSTANTS.gamma_gyro):
    """RF field amplitude (mT) from the Rabi frequency (Hz): sqrt(2) nu / gamma."""
    nu = np.asarray(nu_R, dtype=float)
    if np.any(nu < 0):
        raise ValueError("Rabi frequency must be >= 0")
    B = math.sqrt(2) * nu / gamma_gyro
    return float(B) if B.ndim == 0 else B


def y_window_bounds(ny: int, y_center: int, y_window: int = 10) -> tuple[int, int]:
    lo = y_center - y_window // 2
    hi = lo + y_window
    if y_window < 1 or lo < 0 or hi > ny:
        raise ValueError(f"y window [{lo}, {hi}) is outside the stack (ny = {ny})")
    return lo, hi


def map_field_profile(stack: ContrastStack, y_center: int, y_window: int = 10,
                      gamma_gyro: float = CONSTANTS.gamma_gyro,
                      max_nan_fraction: float = 0.5) -> FieldProfile:
    """Rabi frequency and field along x, averaging ``y_window`` rows around ``y_center``.

    NaN pixels are left out of the average. A column whose window is more
    than ``max_nan_fraction`` NaN, or whose averaged curve has no usable
    spectral peak, yields NaN instead of failing the whole map.
    """
    lo, hi = y_window_bounds(stack.shape[1], y_center, y_window)
    window = np.asarray(stack.contrast[:, lo:hi, :], dtype=float)
    tau = stack.tau_values
    nan_frac = np.isnan(window).mean(axis=(1, 2))
    counts = np.sum(~np.isnan(window), axis=1)
    sums = np.nansum(window, axis=1)
    nu = np.full(stack.shape[0], np.nan)
    for ix in range(stack.shape[0]):
        if nan_frac[ix] > max_nan_fraction or np.any(counts[ix] == 0):
            continue
        try:
            nu[ix] = fft_rabi_frequency(tau, sums[ix] / counts[ix])
        except SpectralPeakError:
            continue
    return FieldProfile(stack.x_positions, nu, b_field_from_rabi(nu, gamma_gyro))
