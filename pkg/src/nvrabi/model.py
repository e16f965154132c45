"""Seven-level NV-center model with a single ground-state spin coherence.

Levels: 1, 2, 3 are the ground-state spin sublevels |0>, |-1>, |+1>;
4, 5, 6 the corresponding excited-state sublevels; 7 the metastable singlet.
A state is a length-8 float array ``(n1, ..., n7, n_c)`` where ``n_c`` is the
imaginary part of the rotating-frame coherence between levels 1 and 2.

The RF drive is on resonance with the 1 <-> 2 transition and the equations
are written in the rotating frame, so the resonance frequency never enters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .constants import CONSTANTS

STATE_LABELS = ("n1", "n2", "n3", "n4", "n5", "n6", "n7", "n_c")
N1, N2, N3, N4, N5, N6, N7, NC = range(8)

# Populations below zero by less than this are treated as roundoff.
CLAMP_EPS = 1e-9


class IntegrationError(ArithmeticError):
    """Raised when the integrator produces non-finite values."""


class DegenerateRatesError(ValueError):
    """Raised when the rate matrix has no unique stationary state."""


def _check_nonnegative(obj):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"{type(obj).__name__}.{f.name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class TransitionRates:
    """Incoherent transition rates k_ij from level i to level j, in s^-1."""

    k41: float = 62e6
    k52: float = 62e6
    k63: float = 62e6
    k47: float = 5e6
    k57: float = 32e6
    k67: float = 32e6
    k71: float = 1.8e6
    k72: float = 0.3e6
    k73: float = 0.3e6

    def __post_init__(self):
        _check_nonnegative(self)

    @property
    def metastable_decay(self) -> float:
        return self.k71 + self.k72 + self.k73

    def excited_decay(self) -> tuple[float, float, float]:
        """Total decay rate out of levels 4, 5 and 6."""
        return (self.k41 + self.k47, self.k52 + self.k57, self.k63 + self.k67)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DriveParams:
    """Drive applied during one phase of the pulse cycle.

    W_p is the optical pumping rate (s^-1), Omega_R the Rabi angular
    frequency (rad/s) and Gamma_2 the decay rate of the spin coherence (s^-1).
    """

    W_p: float = 0.0
    Omega_R: float = 0.0
    Gamma_2: float = 0.0

    def __post_init__(self):
        _check_nonnegative(self)


DEFAULT_RATES = TransitionRates()


def thermal_state() -> np.ndarray:
    """Room-temperature equilibrium: ground sublevels equally populated."""
    return np.array([1 / 3, 1 / 3, 1 / 3, 0, 0, 0, 0, 0], dtype=float)


def make_state(*values) -> np.ndarray:
    state = np.asarray(values[0] if len(values) == 1 else values, dtype=float).copy()
    if state.shape != (8,):
        raise ValueError(f"state must have 8 entries (n1..n7, n_c), got shape {state.shape}")
    return state


def check_state(state, atol: float = 1e-9) -> None:
    """Raise ValueError unless ``state`` is a finite, normalized population vector."""
    state = np.asarray(state, dtype=float)
    if state.shape != (8,):
        raise ValueError(f"state must have 8 entries, got shape {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError(f"state has non-finite entries: {state}")
    total = state[:7].sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"populations sum to {total!r}, expected 1")


def excited_population(state) -> np.ndarray | float:
    """n4 + n5 + n6; works on a single state or on a stack of states."""
    state = np.asarray(state, dtype=float)
    return state[..., N4] + state[..., N5] + state[..., N6]


def ground_polarization(state) -> np.ndarray | float:
    """Fraction of the ground-state population that sits in |0>."""
    state = np.asarray(state, dtype=float)
    return state[..., N1] / (state[..., N1] + state[..., N2] + state[..., N3])


def gamma_c(s: float, Gamma_c_inf: float = CONSTANTS.Gamma_c_inf) -> float:
    """Optically induced spin decoherence rate at saturation parameter ``s``."""
    if s < 0:
        raise ValueError("saturation parameter must be >= 0")
    return Gamma_c_inf * s / (s + 1)


def derivative(state, rates: TransitionRates, drive: DriveParams) -> np.ndarray:
    """Time derivative of ``(n1, ..., n7, n_c)``.

    dn7/dt is returned as minus the sum of the other population derivatives,
    so the eight population derivatives always sum to exactly zero.
    """
    n = np.asarray(state, dtype=float)
    if n.shape != (8,) or not np.all(np.isfinite(n)):
        raise ValueError(f"state must be 8 finite values, got {n!r}")
    r = rates
    W, Om, G2 = drive.W_p, drive.Omega_R, drive.Gamma_2
    n1, n2, n3, n4, n5, n6, n7, nc = n
    d = np.empty(8)
    d[N1] = -n1 * W + n4 * r.k41 + n7 * r.k71 + Om * nc
    d[N2] = -n2 * W + n5 * r.k52 + n7 * r.k72 - Om * nc
    d[N3] = -n3 * W + n6 * r.k63 + n7 * r.k73
    d[N4] = n1 * W - n4 * r.k41 - n4 * r.k47
    d[N5] = n2 * W - n5 * r.k52 - n5 * r.k57
    d[N6] = n3 * W - n6 * r.k63 - n6 * r.k67
    d[N7] = -(d[N1] + d[N2] + d[N3] + d[N4] + d[N5] + d[N6])
    d[NC] = -G2 * nc + Om / 2 * (n2 - n1)
    return d


def affine_system(rates: TransitionRates, drive: DriveParams) -> np.ndarray:
    """Augmented 8x8 generator of the reduced system.

    The reduced vector is ``(n1, ..., n6, n_c, 1)``: n7 is eliminated through
    the normalization, which turns the rate equations into ``y' = M y + b``.
    Appending a constant 1 makes this the linear system ``z' = A z``.
    """
    r = rates
    W, Om, G2 = drive.W_p, drive.Omega_R, drive.Gamma_2
    A = np.zeros((8, 8))
    # ground levels, with n7 = 1 - (n1 + ... + n6)
    for i, (k_in, k7) in enumerate(((r.k41, r.k71), (r.k52, r.k72), (r.k63, r.k73))):
        A[i, :6] -= k7
        A[i, 7] = k7
        A[i, i] -= W
        A[i, i + 3] += k_in
    A[0, 6] = Om
    A[1, 6] = -Om
    for i, k_out in enumerate(r.excited_decay()):
        A[i + 3, i] = W
        A[i + 3, i + 3] = -k_out
    A[6, 6] = -G2
    A[6, 0] = -Om / 2
    A[6, 1] = Om / 2
    return A


def _reduce(state: np.ndarray) -> np.ndarray:
    z = np.empty(8)
    z[:6] = state[:6]
    z[6] = state[NC]
    z[7] = 1.0
    return z


def _expand(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_reduce`; also accepts a stack of reduced vectors."""
    z = np.asarray(z)
    out = np.empty(z.shape[:-1] + (8,))
    out[..., :6] = z[..., :6]
    out[..., N7] = z[..., 7] - z[..., :6].sum(axis=-1)
    out[..., NC] = z[..., 6]
    return out


def settle(state: np.ndarray) -> np.ndarray:
    """Clamp roundoff-level negative populations and renormalize.

    Only applied at phase boundaries so that genuine integrator errors are not
    hidden mid-integration.
    """
    state = np.array(state, dtype=float)
    pops = state[:7]
    pops[(pops < 0) & (pops > -CLAMP_EPS)] = 0.0
    pops /= pops.sum()
    return state


def n_steps(duration: float, dt: float) -> int:
    """Number of equal RK4 steps (each no longer than ``dt``) covering ``duration``."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if duration == 0:
        return 0
    # tolerate float noise in duration / dt, e.g. 2.1e-7 / 1e-9
    return max(1, math.ceil(duration / dt - 1e-6))


@dataclass
class Trace:
    """Sampled trajectory; ``states`` has shape (len(t), 8)."""

    t: np.ndarray
    states: np.ndarray

    @classmethod
    def empty(cls) -> Trace:
        return cls(np.empty(0), np.empty((0, 8)))

    def __len__(self) -> int:
        return len(self.t)

    @staticmethod
    def concatenate(traces, t_offsets) -> Trace:
        parts = [(tr.t + off, tr.states) for tr, off in zip(traces, t_offsets) if len(tr)]
        if not parts:
            return Trace.empty()
        return Trace(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def integrate(state, rates: TransitionRates, drive: DriveParams, duration: float,
              dt: float = 1e-9, record: bool = True, stride: int = 1):
    """Advance ``state`` by ``duration`` seconds with fixed-step RK4.

    The step is shrunk to ``duration / ceil(duration / dt)`` so the phase is
    covered exactly. Returns ``(final_state, trace)``; the trace holds every
    ``stride``-th grid point including both end points, and is empty when
    ``duration`` is 0.
    """
    state = make_state(state)
    N = n_steps(duration, dt)
    if N == 0:
        return state, Trace.empty()
    h = duration / N
    A = affine_system(rates, drive)
    z = _reduce(state)
    if record:
        keep = list(range(0, N + 1, stride))
        if keep[-1] != N:
            keep.append(N)
        zs = np.empty((len(keep), 8))
        zs[0] = z
        slot = 1
    for i in range(1, N + 1):
        k1 = A @ z
        k2 = A @ (z + 0.5 * h * k1)
        k3 = A @ (z + 0.5 * h * k2)
        k4 = A @ (z + h * k3)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise IntegrationError(f"non-finite state at step {i} of {N} (t = {i * h:.6g} s)")
        if record and slot < len(keep) and keep[slot] == i:
            zs[slot] = z
            slot += 1
    final = settle(_expand(z))
    if not record:
        return final, Trace.empty()
    return final, Trace(np.array(keep) * h, _expand(zs))


def rk4_step_matrix(rates: TransitionRates, drive: DriveParams, h: float) -> np.ndarray:
    """One RK4 step of the augmented linear system as a matrix.

    For a linear system RK4 is exactly multiplication by
    ``I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24``.
    """
    X = affine_system(rates, drive) * h
    P = np.eye(8)
    term = np.eye(8)
    for k in range(1, 5):
        term = term @ X / k
        P = P + term
    return P


@dataclass(frozen=True)
class PhaseOperator:
    """N RK4 steps of one phase, precomputed.

    ``power`` maps the reduced start vector to the reduced end vector and
    ``partial_sum`` is ``sum_{k<N} P^k``, so the sum of the reduced vectors
    over the grid points 0..N-1 is ``partial_sum @ z0``.
    """

    power: np.ndarray
    partial_sum: np.ndarray
    steps: int
    h: float

    def apply(self, state: np.ndarray) -> np.ndarray:
        if self.steps == 0:
            return state
        z = self.power @ _reduce(state)
        if not np.all(np.isfinite(z)):
            raise IntegrationError("non-finite state after phase propagation")
        return settle(_expand(z))

    def trapezoid(self, state: np.ndarray, weights: np.ndarray) -> float:
        """Trapezoidal integral over the phase of ``weights . state(t)``."""
        if self.steps == 0:
            return 0.0
        w = _reduce_weights(weights)
        z0 = _reduce(state)
        zN = self.power @ z0
        return float(self.h * (w @ (self.partial_sum @ z0) + 0.5 * (w @ zN - w @ z0)))


def _reduce_weights(weights: np.ndarray) -> np.ndarray:
    """Weights for reduced vectors equivalent to ``weights`` on full states."""
    w = np.asarray(weights, dtype=float)
    out = np.empty(8)
    out[:6] = w[:6] - w[N7]
    out[6] = w[NC]
    out[7] = w[N7]
    return out


def phase_operator(rates: TransitionRates, drive: DriveParams, duration: float,
                   dt: float = 1e-9) -> PhaseOperator:
    """Propagator for one phase, using the same step grid as :func:`integrate`."""
    N = n_steps(duration, dt)
    if N == 0:
        return PhaseOperator(np.eye(8), np.zeros((8, 8)), 0, 0.0)
    h = duration / N
    P = rk4_step_matrix(rates, drive, h)
    # binary powering of (P^m, sum_{k<m} P^k)
    power, total = np.eye(8), np.zeros((8, 8))
    Pm, Sm = P, np.eye(8)
    m = N
    while m:
        if m & 1:
            total = total + power @ Sm
            power = power @ Pm
        Sm = Sm + Pm @ Sm
        Pm = Pm @ Pm
        m >>= 1
    return PhaseOperator(power, total, N, h)


def _rate_matrix(rates: TransitionRates, W_p: float) -> np.ndarray:
    """7x7 generator of the populations for Omega_R = 0 (columns sum to zero)."""
    r = rates
    Q = np.zeros((7, 7))
    for i in range(3):
        Q[i + 3, i] += W_p
        Q[i, i] -= W_p
    for (src, dst), k in {(3, 0): r.k41, (4, 1): r.k52, (5, 2): r.k63,
                          (3, 6): r.k47, (4, 6): r.k57, (5, 6): r.k67,
                          (6, 0): r.k71, (6, 1): r.k72, (6, 2): r.k73}.items():
        Q[dst, src] += k
        Q[src, src] -= k
    return Q


def steady_state(rates: TransitionRates, drive: DriveParams, ground=None) -> np.ndarray:
    """Stationary state of the rate equations for a phase without RF.

    With ``W_p > 0`` the stationary state is unique. Without pumping every
    ground-state distribution is stationary, so the excited and metastable
    populations of ``ground`` (default: thermal state) are drained into the
    ground levels along their branching ratios.
    """
    if drive.Omega_R != 0:
        raise ValueError("steady_state requires Omega_R = 0")
    r = rates
    if not any(r.as_dict().values()):
        raise DegenerateRatesError("all transition rates are zero")
    out = np.zeros(8)
    if drive.W_p == 0:
        n = thermal_state() if ground is None else make_state(ground)
        pops = n[:7].copy()
        meta = pops[6]
        for exc, (k_rad, k_isc) in zip((3, 4, 5), ((r.k41, r.k47), (r.k52, r.k57), (r.k63, r.k67))):
            if k_rad + k_isc > 0:
                pops[exc - 3] += pops[exc] * k_rad / (k_rad + k_isc)
                meta += pops[exc] * k_isc / (k_rad + k_isc)
                pops[exc] = 0.0
        if r.metastable_decay > 0:
            for g, k in enumerate((r.k71, r.k72, r.k73)):
                pops[g] += meta * k / r.metastable_decay
            meta = 0.0
        pops[6] = meta
        out[:7] = pops
    else:
        Q = _rate_matrix(rates, drive.W_p)
        # replace one balance equation by the normalization
        M = Q.copy()
        M[-1, :] = 1.0
        rhs = np.zeros(7)
        rhs[-1] = 1.0
        if np.linalg.matrix_rank(M) < 7:
            raise DegenerateRatesError("rate matrix has no unique stationary state")
        out[:7] = np.linalg.solve(M, rhs)
    if drive.Gamma_2 == 0 and ground is not None:
        out[NC] = make_state(ground)[NC]
    return settle(out)
