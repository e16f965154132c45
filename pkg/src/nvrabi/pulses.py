"""Laser / wait / RF pulse cycles and camera-gated contrast.

A camera integrates the photoluminescence over many identical cycles, so the
quantity of interest is the cycle that repeats itself once transients have
died out. The PL of that cycle is integrated over its laser phase, and the
contrast compares it with the same sequence run with the RF switched off.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .constants import CONSTANTS, GAMMA2_DARK, OMEGA_R_DEFAULT
from .model import (
    DEFAULT_RATES,
    DriveParams,
    Trace,
    TransitionRates,
    excited_population,
    gamma_c,
    integrate,
    make_state,
    phase_operator,
    thermal_state,
)

PHASES = ("laser", "wait", "rf")
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
_NE_WEIGHTS = np.array([0, 0, 0, 1, 1, 1, 0, 0], dtype=float)


class CycleConvergenceError(ArithmeticError):
    def __init__(self, cycles: int, residual: float):
        super().__init__(f"no cyclic steady state after {cycles} cycles (residual {residual:.3e})")
        self.cycles = cycles
        self.residual = residual


@dataclass(frozen=True)
class PulseSequence:
    laser_duration: float
    wait_duration: float
    rf_duration: float
    laser_phase: DriveParams
    wait_phase: DriveParams
    rf_phase: DriveParams

    def __post_init__(self):
        for name in ("laser_duration", "wait_duration", "rf_duration"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.laser_phase.Omega_R != 0:
            raise ValueError("RF must be off during the laser phase")
        if self.wait_phase.W_p != 0 or self.wait_phase.Omega_R != 0:
            raise ValueError("laser and RF must be off during the wait phase")
        if self.rf_phase.W_p != 0:
            raise ValueError("laser must be off during the RF phase")

    def phases(self):
        return ((self.laser_phase, self.laser_duration),
                (self.wait_phase, self.wait_duration),
                (self.rf_phase, self.rf_duration))

    def with_tau(self, tau: float) -> PulseSequence:
        return replace(self, rf_duration=tau)

    def reference(self) -> PulseSequence:
        """Same timing with the RF field off."""
        return replace(self, rf_phase=replace(self.rf_phase, Omega_R=0.0))


def standard_sequence(laser_duration: float = 10e-6, tau: float = 1e-6, *, s: float = 0.1,
                      W_p: float | None = None, Omega_R: float = OMEGA_R_DEFAULT,
                      wait_duration: float = 400e-9, gamma2_dark: float = GAMMA2_DARK,
                      W_p_sat: float = CONSTANTS.W_p_sat,
                      Gamma_c_inf: float = CONSTANTS.Gamma_c_inf) -> PulseSequence:
    """Build the standard laser, wait, RF pulse sequence.

    The pump rate is ``s * W_p_sat`` unless ``W_p`` is given, in which case
    ``s`` is only used for the optically induced decoherence during the laser.
    """
    if W_p is None:
        W_p = s * W_p_sat
    return PulseSequence(
        laser_duration=laser_duration,
        wait_duration=wait_duration,
        rf_duration=tau,
        laser_phase=DriveParams(W_p=W_p, Omega_R=0.0, Gamma_2=gamma_c(s, Gamma_c_inf)),
        wait_phase=DriveParams(0.0, 0.0, gamma2_dark),
        rf_phase=DriveParams(0.0, Omega_R, gamma2_dark),
    )


@dataclass
class CycleResult:
    """One pass through laser, wait and RF.

    ``boundaries`` holds the state at the start of the cycle and at the end of
    each phase, keyed ``start``, ``laser``, ``wait``, ``rf``; the state right
    before the RF pulse is ``boundaries["wait"]``.
    """

    final_state: np.ndarray
    integrated_PL: float
    boundaries: dict
    trace: Trace | None = None
    cycles: int = 1
    residual: float = float("nan")

    @property
    def pre_rf_state(self) -> np.ndarray:
        return self.boundaries["wait"]


@lru_cache(maxsize=256)
def _operator(rates, drive, duration, dt):
    return phase_operator(rates, drive, duration, dt)


def _cycle_fast(state, seq, rates, dt):
    bounds = {"start": state}
    pl = 0.0
    for name, (drive, duration) in zip(PHASES, seq.phases()):
        op = _operator(rates, drive, duration, dt)
        if name == "laser":
            pl = op.trapezoid(state, _NE_WEIGHTS)
        state = op.apply(state)
        bounds[name] = state
    return CycleResult(state, pl, bounds)


def _cycle_traced(state, seq, rates, dt, stride):
    bounds = {"start": state}
    traces, offsets = [], []
    t0 = 0.0
    pl = 0.0
    for name, (drive, duration) in zip(PHASES, seq.phases()):
        state, tr = integrate(state, rates, drive, duration, dt, record=True, stride=1)
        if name == "laser" and len(tr):
            pl = float(_trapezoid(excited_population(tr.states), tr.t))
        if len(tr):
            # drop the first sample of later phases; it repeats the previous end point
            sel = np.unique(np.append(np.arange(0, len(tr.t), stride), len(tr.t) - 1))
            if traces:
                sel = sel[1:]
            traces.append(Trace(tr.t[sel], tr.states[sel]))
            offsets.append(t0)
        t0 += duration
        bounds[name] = state
    return CycleResult(state, pl, bounds, trace=Trace.concatenate(traces, offsets))


def run_cycle(state, seq: PulseSequence, rates: TransitionRates = DEFAULT_RATES,
              dt: float = 1e-9, trace: bool = False, stride: int = 1) -> CycleResult:
    """Run laser, wait and RF once, each phase starting where the last ended.

    ``integrated_PL`` is the trapezoidal integral of n4 + n5 + n6 over the
    laser phase (units of s). With ``trace`` the cycle is stepped explicitly
    and the sampled populations are returned; otherwise the precomputed
    phase propagators are used, which follow the same RK4 grid.
    """
    state = make_state(state)
    if trace:
        return _cycle_traced(state, seq, rates, dt, stride)
    return _cycle_fast(state, seq, rates, dt)


def iterate_to_steady_cycle(seq: PulseSequence, rates: TransitionRates = DEFAULT_RATES,
                            dt: float = 1e-9, tol: float = 1e-8, max_cycles: int = 1000,
                            initial=None, trace: str = "none", stride: int = 1) -> CycleResult:
    """Repeat :func:`run_cycle` from the thermal state until it stops changing.

    Convergence is declared when the max-norm change of the end-of-cycle state
    drops below ``tol``; the result describes that last cycle and carries the
    number of cycles run. ``trace`` is ``"none"``, ``"last"`` (trace of the
    converged cycle) or ``"all"`` (every cycle, concatenated in time).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if max_cycles < 1:
        raise ValueError("max_cycles must be >= 1")
    if trace not in ("none", "last", "all"):
        raise ValueError(f"unknown trace mode {trace!r}")
    state = thermal_state() if initial is None else make_state(initial)
    stepwise = trace == "all"
    traces = []
    residual = float("inf")
    for cycle in range(1, max_cycles + 1):
        res = run_cycle(state, seq, rates, dt, trace=stepwise, stride=stride)
        if stepwise:
            traces.append(res.trace)
        residual = float(np.max(np.abs(res.final_state - state)))
        state = res.final_state
        if residual < tol:
            break
    else:
        raise CycleConvergenceError(max_cycles, residual)
    res.cycles = cycle
    res.residual = residual
    if trace == "last":
        res.trace = run_cycle(res.boundaries["start"], seq, rates, dt, trace=True, stride=stride).trace
    elif trace == "all":
        period = seq.laser_duration + seq.wait_duration + seq.rf_duration
        # each cycle starts where the previous one ended; keep that sample once
        traces = traces[:1] + [Trace(tr.t[1:], tr.states[1:]) for tr in traces[1:]]
        res.trace = Trace.concatenate(traces, [i * period for i in range(len(traces))])
    return res


def contrast_at_tau(seq: PulseSequence, rates: TransitionRates = DEFAULT_RATES,
                    dt: float = 1e-9, tol: float = 1e-8, max_cycles: int = 1000) -> float:
    """Contrast (PL_ref - PL_sig) / PL_ref of the converged cycles."""
    sig = iterate_to_steady_cycle(seq, rates, dt, tol, max_cycles).integrated_PL
    if seq.rf_phase.Omega_R == 0 or seq.rf_duration == 0:
        ref = sig  # the reference run is the same computation
    else:
        ref = iterate_to_steady_cycle(seq.reference(), rates, dt, tol, max_cycles).integrated_PL
    if ref == 0:
        raise ZeroDivisionError("reference PL is zero (is the laser on?)")
    return (ref - sig) / ref


@dataclass
class RabiCurve:
    tau_values: np.ndarray
    contrast_values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_values = np.asarray(self.tau_values, dtype=float)
        self.contrast_values = np.asarray(self.contrast_values, dtype=float)
        if self.tau_values.shape != self.contrast_values.shape or self.tau_values.ndim != 1:
            raise ValueError("tau and contrast must be 1-D arrays of equal length")
        if np.any(np.diff(self.tau_values) <= 0):
            raise ValueError("tau values must be strictly increasing")

    def __len__(self):
        return len(self.tau_values)


def _contrast_job(args):
    seq, tau, rates, dt, tol, max_cycles = args
    return contrast_at_tau(seq.with_tau(tau), rates, dt, tol, max_cycles)


def default_workers() -> int:
    return int(os.environ.get("NVRABI_WORKERS", "1"))


def simulate_rabi_sweep(seq: PulseSequence, tau_list, rates: TransitionRates = DEFAULT_RATES,
                        dt: float = 1e-9, tol: float = 1e-8, max_cycles: int = 1000,
                        workers: int | None = None) -> RabiCurve:
    """Contrast for every RF duration in ``tau_list``.

    The reference PL is recomputed for each tau because the RF-off window
    still lasts tau. Each tau is independent, so ``workers > 1`` farms them
    out to processes; the result does not depend on the worker count.
    """
    taus = np.asarray(tau_list, dtype=float)
    if taus.ndim != 1 or len(taus) == 0:
        raise ValueError("tau_list must be a non-empty 1-D sequence")
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau_list must be strictly increasing")
    workers = default_workers() if workers is None else workers
    jobs = [(seq, float(t), rates, dt, tol, max_cycles) for t in taus]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            contrast = list(pool.map(_contrast_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        contrast = [_contrast_job(j) for j in jobs]
    meta = {"laser_duration": seq.laser_duration, "wait_duration": seq.wait_duration,
            "W_p": seq.laser_phase.W_p, "Omega_R": seq.rf_phase.Omega_R,
            "gamma2_laser": seq.laser_phase.Gamma_2, "gamma2_wait": seq.wait_phase.Gamma_2,
            "gamma2_rf": seq.rf_phase.Gamma_2, "dt": dt, "tol": tol}
    return RabiCurve(taus, np.array(contrast), meta)
