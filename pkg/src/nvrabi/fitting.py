"""Nonlinear least-squares fits: damped-cosine Rabi curves, optical saturation
and the 1/distance decay of the field next to a wire.

All three models are smooth with cheap exact derivatives, so a small
Levenberg-Marquardt solver with analytic Jacobians is used throughout.
Each fit works in rescaled units so that the parameters are O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import SpectralPeakError, fft_rabi_frequency

# Normalized normal-matrix condition numbers above this mark a fit whose
# parameters cannot be separated by the data (relative data errors amplified
# roughly sqrt(1e4) = 100 times).
MAX_CONDITION = 1e4


@dataclass
class LeastSquaresResult:
    params: np.ndarray
    cost: float
    jac: np.ndarray
    n_iter: int
    converged: bool
    message: str


def levenberg_marquardt(residual, jacobian, p0, *, max_iter=200, xtol=1e-10,
                        feasible=None, lam0=1e-3) -> LeastSquaresResult:
    """Minimize ``0.5 * |residual(p)|^2`` with Marquardt-scaled damping.

    Stops when an accepted step changes the parameters by less than ``xtol``
    relative to their norm, or when no step can lower the cost and the
    gradient is negligible. Steps leaving the ``feasible`` region are treated
    like steps that increase the cost. Never raises on non-convergence; the
    best parameters found are returned with ``converged=False``.
    """
    p = np.array(p0, dtype=float)
    r = residual(p)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        return LeastSquaresResult(p, cost, jacobian(p), 0, False, "non-finite residual at start")
    lam = lam0
    J = jacobian(p)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        H = J.T @ J
        d = np.diag(H).copy()
        floor = 1e-12 * d.max() if d.max() > 0 else 1.0
        d[d < floor] = floor
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = p + step
                if feasible is None or feasible(trial):
                    r_trial = residual(trial)
                    cost_trial = 0.5 * float(r_trial @ r_trial)
                    if np.isfinite(cost_trial) and cost_trial <= cost:
                        break
            lam *= 10
            if lam > 1e16:
                ok = cost == 0 or _gradient_small(g, H, cost)
                msg = "cost cannot be reduced further" if ok else "step rejected at maximum damping"
                return LeastSquaresResult(p, cost, J, it, ok, msg)
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10, 1e-15)
        J = jacobian(p)
        if np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol) or cost == 0:
            return LeastSquaresResult(p, cost, J, it, True, "relative parameter change below xtol")
    return LeastSquaresResult(p, cost, J, max_iter, False, f"no convergence after {max_iter} iterations")


def _gradient_small(g, H, cost, gtol=1e-8):
    scale = np.sqrt(np.maximum(np.diag(H), 0) * 2 * cost)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosines = np.where(scale > 0, np.abs(g) / scale, 0.0)
    return bool(np.all(cosines < gtol))


def normalized_condition(jac) -> float:
    """Condition number of J^T J after scaling it to unit diagonal."""
    H = jac.T @ jac
    d = np.sqrt(np.diag(H))
    if not np.all(np.isfinite(H)) or np.any(d == 0):
        return math.inf
    return float(np.linalg.cond(H / np.outer(d, d)))


def _covariance(jac, cost, n_data, scales):
    n = jac.shape[1]
    dof = max(n_data - n, 1)
    try:
        inv = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full((n, n), np.inf)
    cov = inv * (2 * cost / dof)
    s = np.asarray(scales, dtype=float)
    return cov * np.outer(s, s)


# ---------------------------------------------------------------- Rabi curves

@dataclass
class RabiFit:
    """Parameters of ``a_R * (1 - exp(-tau / b_R) * cos(c_R * tau + d_R))``.

    b_R in s, c_R in rad/s, d_R wrapped to (-pi, pi].
    """

    a_R: float
    b_R: float
    c_R: float
    d_R: float
    residual_rms: float
    covariance: np.ndarray
    converged: bool
    well_conditioned: bool
    condition: float
    n_iter: int
    message: str

    @property
    def valid(self) -> bool:
        return self.converged and self.well_conditioned

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a_R, self.b_R, self.c_R, self.d_R)

    def as_dict(self) -> dict:
        return {"a_R": self.a_R, "b_R_s": self.b_R, "c_R_rad_per_s": self.c_R,
                "d_R_rad": self.d_R, "residual_rms": self.residual_rms,
                "converged": self.converged, "well_conditioned": self.well_conditioned,
                "condition": self.condition, "n_iter": self.n_iter, "message": self.message,
                "stderr": np.sqrt(np.abs(np.diag(self.covariance))).tolist()}


def rabi_model(tau, a_R, b_R, c_R, d_R):
    tau = np.asarray(tau, dtype=float)
    return a_R * (1 - np.exp(-tau / b_R) * np.cos(c_R * tau + d_R))


def wrap_phase(d: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(d, 2 * math.pi)
    return math.pi if w == -math.pi else w


def initial_rabi_guess(tau, contrast):
    """Data-driven starting point (a_R, b_R, c_R, d_R) for :func:`fit_rabi`.

    Amplitude from the mean, frequency from the spectral peak, decay time of
    half the sweep, and phase from projecting the oscillating part onto
    cos/sin at that frequency, which absorbs a sweep not starting at zero.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(contrast, dtype=float)
    span = tau[-1] - tau[0]
    a = float(np.mean(y))
    try:
        c = 2 * math.pi * fft_rabi_frequency(tau, y)
    except (SpectralPeakError, ValueError):
        c = 2 * math.pi / span
    b = span / 2
    if a != 0:
        X = np.column_stack([np.cos(c * tau), np.sin(c * tau)]) * np.exp(-tau / b)[:, None]
        (alpha, beta), *_ = np.linalg.lstsq(X, y / a - 1, rcond=None)
        d = math.atan2(beta, -alpha)
    else:
        d = 0.0
    return a, b, c, d


def fit_rabi(curve, initial_guess=None, max_iter: int = 200,
             max_condition: float = MAX_CONDITION) -> RabiFit:
    """Least-squares fit of the damped-cosine Rabi model to a contrast curve.

    ``curve`` is a RabiCurve or a ``(tau, contrast)`` pair. Non-convergence
    and unidentifiable parameters are reported through ``converged`` and
    ``well_conditioned`` rather than raised.
    """
    tau, y = _curve_arrays(curve)
    if len(tau) < 8:
        raise ValueError(f"need at least 8 samples to fit a Rabi curve, got {len(tau)}")
    guess = initial_rabi_guess(tau, y) if initial_guess is None else tuple(map(float, initial_guess))

    t_unit = 1e-6
    y_unit = float(np.max(np.abs(y))) or 1.0
    u = tau / t_unit
    yn = y / y_unit
    scales = np.array([y_unit, t_unit, 1 / t_unit, 1.0])
    p0 = np.array(guess) / scales
    p0[0] = max(p0[0], 0.0)

    def parts(p):
        A, B, C, D = p
        E = np.exp(-u / B)
        th = C * u + D
        return A, B, E, np.cos(th), np.sin(th)

    def residual(p):
        A, B, E, cs, _ = parts(p)
        return A * (1 - E * cs) - yn

    def jacobian(p):
        A, B, E, cs, sn = parts(p)
        return np.column_stack([1 - E * cs, -A * E * cs * u / B**2, A * E * sn * u, A * E * sn])

    res = levenberg_marquardt(residual, jacobian, p0, max_iter=max_iter,
                              feasible=lambda p: p[0] >= 0 and p[1] > 0)
    A, B, C, D = res.params
    if C < 0:
        # cos(-x + d) = cos(x - d)
        C, D = -C, -D
    a, b, c, d = A * y_unit, B * t_unit, C / t_unit, wrap_phase(D)
    cond = normalized_condition(res.jac)
    rms = math.sqrt(2 * res.cost / len(tau)) * y_unit
    identifiable = bool(cond <= max_condition) and np.isfinite(res.cost)
    message = res.message
    # An oscillation that does not complete a period inside the sweep, or that
    # decays within one sample, leaves c_R and b_R undetermined even when the
    # normal matrix looks healthy.
    step = float(np.min(np.diff(tau)))
    if c * (tau[-1] - tau[0]) < 2 * math.pi or b < step:
        identifiable = False
        message += "; oscillation not resolved by the sweep"
    return RabiFit(a, b, c, d, rms, _covariance(res.jac, res.cost, len(tau), scales),
                   res.converged, identifiable, cond, res.n_iter, message)


def _curve_arrays(curve):
    if hasattr(curve, "tau_values"):
        tau, y = curve.tau_values, curve.contrast_values
    else:
        tau, y = curve
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(y, dtype=float)
    if tau.shape != y.shape or tau.ndim != 1:
        raise ValueError("tau and contrast must be 1-D arrays of equal length")
    ok = np.isfinite(tau) & np.isfinite(y)
    return tau[ok], y[ok]


# ----------------------------------------------------------------- saturation

@dataclass
class SaturationFit:
    """``n_E = a_p * W_p / (W_p + W_p_sat)``."""

    a_p: float
    W_p_sat: float
    residual_rms: float
    covariance: np.ndarray
    converged: bool
    well_conditioned: bool
    condition: float
    message: str

    @property
    def valid(self) -> bool:
        return self.converged and self.well_conditioned


def saturation_model(W_p, a_p, W_p_sat):
    W_p = np.asarray(W_p, dtype=float)
    return a_p * W_p / (W_p + W_p_sat)


def fit_saturation(scan, max_iter: int = 200, max_condition: float = MAX_CONDITION) -> SaturationFit:
    """Fit the saturation law to ``(W_p, n_E)`` rows."""
    scan = np.asarray(scan, dtype=float)
    W, nE = scan[:, 0], scan[:, 1]
    if len(W) < 3:
        raise ValueError("need at least 3 scan points")
    W_unit = float(np.max(W))
    y_unit = float(np.max(np.abs(nE))) or 1.0
    w = W / W_unit
    yn = nE / y_unit

    # Lineweaver-Burk start: 1/n = 1/a + (Ws/a) / W
    pos = (w > 0) & (yn > 0)
    p0 = np.array([1.0, 1.0])
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(1 / w[pos], 1 / yn[pos], 1)
        if icpt > 0 and slope > 0:
            p0 = np.array([1 / icpt, slope / icpt])

    def residual(p):
        return p[0] * w / (w + p[1]) - yn

    def jacobian(p):
        return np.column_stack([w / (w + p[1]), -p[0] * w / (w + p[1]) ** 2])

    res = levenberg_marquardt(residual, jacobian, p0, max_iter=max_iter, feasible=lambda p: p[1] > 0)
    scales = np.array([y_unit, W_unit])
    cond = normalized_condition(res.jac)
    rms = math.sqrt(2 * res.cost / len(W)) * y_unit
    return SaturationFit(res.params[0] * y_unit, res.params[1] * W_unit, rms,
                         _covariance(res.jac, res.cost, len(W), scales),
                         res.converged, bool(cond <= max_condition), cond, res.message)


# ------------------------------------------------------------------ wire decay

@dataclass
class WireFit:
    """``f(x) = a_W / (x + b_W - c_W)`` with x, b_W, c_W in um."""

    a_W: float
    b_W: float
    c_W: float
    residual_rms: float
    covariance: np.ndarray
    converged: bool
    well_conditioned: bool
    condition: float
    n_points: int
    message: str

    @property
    def valid(self) -> bool:
        return self.converged and self.well_conditioned

    def as_dict(self) -> dict:
        return {"a_W": self.a_W, "b_W_um": self.b_W, "c_W_um": self.c_W,
                "residual_rms": self.residual_rms, "converged": self.converged,
                "well_conditioned": self.well_conditioned, "condition": self.condition,
                "n_points": self.n_points, "message": self.message,
                "stderr": np.sqrt(np.abs(np.diag(self.covariance))).tolist()}


def wire_model(x, a_W, b_W, c_W):
    return a_W / (np.asarray(x, dtype=float) + b_W - c_W)


def fit_wire_decay(x_um, values, c_W: float, x_range=None, max_iter: int = 200,
                   max_condition: float = MAX_CONDITION) -> WireFit:
    """Fit ``a_W / (x + b_W - c_W)`` with the origin ``c_W`` held fixed.

    NaN values are dropped; ``x_range = (lo, hi)`` restricts the fit.
    """
    x = np.asarray(x_um, dtype=float)
    f = np.asarray(values, dtype=float)
    ok = np.isfinite(x) & np.isfinite(f)
    if x_range is not None:
        ok &= (x >= x_range[0]) & (x <= x_range[1])
    x, f = x[ok], f[ok]
    if len(x) < 5:
        raise ValueError(f"need at least 5 valid points for the wire fit, got {len(x)}")
    xs = x - c_W
    f_unit = float(np.max(np.abs(f))) or 1.0
    fn = f / f_unit

    # 1/f is linear in x: (x - c_W) / a + b / a
    slope, icpt = np.polyfit(xs, 1 / fn, 1) if np.all(fn != 0) else (0.0, 0.0)
    if slope > 0:
        p0 = np.array([1 / slope, icpt / slope])
    else:
        span = float(np.ptp(xs)) or 1.0
        p0 = np.array([span * float(np.mean(fn)), span - float(xs.min())])

    def feasible(p):
        return bool(np.all(xs + p[1] > 0))

    if not feasible(p0):
        p0[1] = 1.0 - float(xs.min())

    def residual(p):
        return p[0] / (xs + p[1]) - fn

    def jacobian(p):
        den = xs + p[1]
        return np.column_stack([1 / den, -p[0] / den**2])

    res = levenberg_marquardt(residual, jacobian, p0, max_iter=max_iter, feasible=feasible)
    scales = np.array([f_unit, 1.0])
    cond = normalized_condition(res.jac)
    rms = math.sqrt(2 * res.cost / len(x)) * f_unit
    return WireFit(res.params[0] * f_unit, float(res.params[1]), float(c_W), rms,
                   _covariance(res.jac, res.cost, len(x), scales),
                   res.converged, bool(cond <= max_condition), cond, len(x), res.message)
