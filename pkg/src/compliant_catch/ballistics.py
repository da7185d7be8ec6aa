"""Ball flight: drag dynamics, filtering, drag identification and prediction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .errors import EstimationFailure, InvalidStep, NumericalFailure, OutOfHorizon, ParseError

GRAVITY = 9.81
K_AD = 0.0295
MAX_SPEED = 50.0
MAX_STEP = 0.01

DEFAULT_Q = np.diag([1e-6] * 3 + [1e-4] * 3)
DEFAULT_R = np.diag([2.5e-5] * 3)


@dataclass
class BallState:
    p: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ValueError("ball state must be finite")
        if np.linalg.norm(self.v) >= MAX_SPEED:
            raise ValueError(f"ball speed must stay below {MAX_SPEED} m/s")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


@dataclass
class BallBelief:
    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0

    @property
    def p(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def v(self) -> np.ndarray:
        return self.mean[3:]


def ball_accel(v, k_ad: float = K_AD, g: float = GRAVITY) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a = -k_ad * math.sqrt(v @ v) * v
    a[2] -= g
    return a


def _deriv(x: np.ndarray, k_ad: float, g: float) -> np.ndarray:
    return np.concatenate([x[3:], ball_accel(x[3:], k_ad, g)])


def _rk4(x: np.ndarray, dt: float, k_ad: float, g: float) -> np.ndarray:
    k1 = _deriv(x, k_ad, g)
    k2 = _deriv(x + 0.5 * dt * k1, k_ad, g)
    k3 = _deriv(x + 0.5 * dt * k2, k_ad, g)
    k4 = _deriv(x + dt * k3, k_ad, g)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(state: BallState, dt: float, k_ad: float = K_AD, g: float = GRAVITY) -> BallState:
    """One RK4 step of the drag-plus-gravity flight model."""
    if not 0.0 < dt <= MAX_STEP:
        raise InvalidStep(f"dt must lie in (0, {MAX_STEP}], got {dt}")
    x = _rk4(state.as_vector(), dt, k_ad, g)
    return BallState(x[:3], x[3:], state.t + dt)


def flow(x, t: float, k_ad: float = K_AD, g: float = GRAVITY, max_step: float = 0.005) -> np.ndarray:
    """Flight state (p, v) after time ``t``; negative ``t`` runs the model backwards."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    steps = max(1, math.ceil(abs(t) / max_step - 1e-9))
    for _ in range(steps):
        x = _rk4(x, t / steps, k_ad, g)
    return x


def simulate(state: BallState, duration: float, dt: float, k_ad: float = K_AD, g: float = GRAVITY):
    """States on a uniform grid ``t0, t0+dt, ...`` covering ``duration``."""
    steps = int(round(duration / dt))
    out = [state]
    for _ in range(steps):
        state = integrate(state, dt, k_ad, g)
        out.append(state)
    return out


def energy(state: BallState, g: float = GRAVITY) -> float:
    """Specific mechanical energy (per unit mass)."""
    return 0.5 * float(state.v @ state.v) + g * float(state.p[2])


def drag_jacobian(v, k_ad: float) -> np.ndarray:
    """d(accel)/d(v); taken as zero at rest."""
    v = np.asarray(v, dtype=float)
    speed = math.sqrt(v @ v)
    if speed == 0.0:
        return np.zeros((3, 3))
    return -k_ad * (speed * np.eye(3) + np.outer(v, v) / speed)


def transition(x: np.ndarray, dt: float, k_ad: float, g: float = GRAVITY):
    """Single explicit filter step and its Jacobian."""
    p, v = x[:3], x[3:]
    a = ball_accel(v, k_ad, g)
    x_new = np.concatenate([p + dt * v + 0.5 * dt * dt * a, v + dt * a])
    A = drag_jacobian(v, k_ad)
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3) + 0.5 * dt * dt * A
    F[3:, 3:] += dt * A
    return x_new, F


def ekf_predict(belief: BallBelief, dt: float, k_ad: float = K_AD, Q=DEFAULT_Q) -> BallBelief:
    mean, F = transition(belief.mean, dt, k_ad)
    cov = F @ belief.cov @ F.T + Q
    return BallBelief(mean, 0.5 * (cov + cov.T), belief.t + dt)


_H = np.hstack([np.eye(3), np.zeros((3, 3))])


def ekf_update(belief: BallBelief, z, R=DEFAULT_R) -> BallBelief:
    """Position-only Kalman correction."""
    z = np.asarray(z, dtype=float)
    P = belief.cov
    S = P[:3, :3] + R
    try:
        K = np.linalg.solve(S, P[:3, :]).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular innovation covariance") from exc
    if not np.all(np.isfinite(K)):
        raise NumericalFailure("singular innovation covariance")
    mean = belief.mean + K @ (z - belief.mean[:3])
    # Joseph form keeps the covariance PSD; equals (I - KH) P for the optimal gain
    IKH = np.eye(6) - K @ _H
    cov = IKH @ P @ IKH.T + K @ R @ K.T
    return BallBelief(mean, 0.5 * (cov + cov.T), belief.t)


def initial_belief(z0, t0: float = 0.0, pos_var: float = 2.5e-5, vel_var: float = 25.0) -> BallBelief:
    mean = np.concatenate([np.asarray(z0, dtype=float), np.zeros(3)])
    cov = np.diag([pos_var] * 3 + [vel_var] * 3)
    return BallBelief(mean, cov, t0)


def run_filter(times, measurements, k_ad: float = K_AD, Q=DEFAULT_Q, R=DEFAULT_R, vel_var: float = 25.0):
    """Filter a measurement track; returns the posterior belief after each sample."""
    times = np.asarray(times, dtype=float)
    meas = np.asarray(measurements, dtype=float)
    belief = initial_belief(meas[0], times[0], pos_var=float(R[0, 0]), vel_var=vel_var)
    beliefs = [belief]
    for t, z in zip(times[1:], meas[1:]):
        belief = ekf_predict(belief, t - belief.t, k_ad, Q)
        belief = ekf_update(belief, z, R)
        beliefs.append(belief)
    return beliefs


def estimate_drag(samples, g: float = GRAVITY, smoothing_window: int | None = None) -> float:
    """Recursive least-squares estimate of the drag coefficient from a position track.

    ``samples`` is a sequence of ``(t, p)`` pairs on a uniform time grid.
    Velocities and accelerations come from central differences of the
    positions; for noisy tracks pass ``smoothing_window`` (odd sample count)
    to smooth with a cubic Savitzky-Golay fit before differencing.
    """
    if len(samples) < 20:
        raise EstimationFailure(f"need at least 20 samples, got {len(samples)}")
    t = np.array([s[0] for s in samples], dtype=float)
    p = np.array([s[1] for s in samples], dtype=float)
    steps = np.diff(t)
    dt = steps.mean()
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * max(dt, 1e-12) + 1e-9:
        raise EstimationFailure("samples must be uniformly timed")
    if smoothing_window:
        v = savgol_filter(p, smoothing_window, 3, deriv=1, delta=dt, axis=0)
        a = savgol_filter(p, smoothing_window, 3, deriv=2, delta=dt, axis=0)
        half = smoothing_window // 2
        v, a = v[half:-half], a[half:-half]
    else:
        v = (p[2:] - p[:-2]) / (2 * dt)
        a = (p[2:] - 2 * p[1:-1] + p[:-2]) / (dt * dt)
    speed = np.linalg.norm(v, axis=1)
    if speed.max() < 0.5:
        raise EstimationFailure("track is too close to rest to identify drag")
    y = a.copy()
    y[:, 2] += g
    phi = -speed[:, None] * v

    k_hat, P = 0.0, 1e6
    for yi, phii in zip(y.ravel(), phi.ravel()):
        gain = P * phii / (1.0 + phii * P * phii)
        k_hat += gain * (yi - phii * k_hat)
        P -= gain * phii * P
    if not math.isfinite(k_hat):
        raise EstimationFailure("regression diverged")
    return float(k_hat)


def read_track_csv(path):
    """Read a ``t,x,y,z`` CSV; returns (times, positions)."""
    times, points = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "x", "y", "z"]:
            raise ParseError("expected header 't,x,y,z'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", lineno) from None
            times.append(vals[0])
            points.append(vals[1:])
    if not times:
        raise ParseError("no data rows", 2)
    return np.array(times), np.array(points)


@dataclass(frozen=True)
class BallPrediction:
    """Immutable knot table of a predicted flight, queryable at any time in range."""

    times: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    k_ad: float = K_AD
    horizon: float = 1.5
    dt: float = 0.005

    @property
    def t0(self) -> float:
        return float(self.times[0])

    def query(self, t: float):
        return query(self, t)


def predict(
    belief: BallBelief, horizon: float = 1.5, dt: float = 0.005, k_ad: float = K_AD, g: float = GRAVITY
) -> BallPrediction:
    """RK4 roll-out of the belief mean. Knot times are relative to the belief time."""
    if horizon > 3.0:
        raise ValueError("horizon must not exceed 3 s")
    if not 0.0 < dt <= MAX_STEP:
        raise InvalidStep(f"dt must lie in (0, {MAX_STEP}], got {dt}")
    steps = int(round(horizon / dt))
    state = BallState(belief.mean[:3].copy(), belief.mean[3:].copy(), 0.0)
    pos, vel = [state.p], [state.v]
    for _ in range(steps):
        state = integrate(state, dt, k_ad, g)
        pos.append(state.p)
        vel.append(state.v)
    times = dt * np.arange(steps + 1)
    positions, velocities = np.array(pos), np.array(vel)
    for arr in (times, positions, velocities):
        arr.setflags(write=False)
    return BallPrediction(times, positions, velocities, k_ad, steps * dt, dt)


def query(pred: BallPrediction, t: float):
    """Cubic Hermite interpolation of position; velocity is its time derivative."""
    if t < -1e-12 or t > pred.horizon + 1e-12:
        raise OutOfHorizon(f"t={t} outside [0, {pred.horizon}]")
    h = pred.dt
    k = min(int(t / h), len(pred.times) - 2)
    k = max(k, 0)
    s = (t - pred.times[k]) / h
    p0, p1 = pred.positions[k], pred.positions[k + 1]
    m0, m1 = pred.velocities[k] * h, pred.velocities[k + 1] * h
    s2, s3 = s * s, s * s * s
    pos = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * m1
    dpos = (6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * p1 + (3 * s2 - 2 * s) * m1
    return pos, dpos / h


def crossing_time(pred: BallPrediction, height: float, tol: float = 1e-9):
    """First time the predicted ball descends through ``height``, or None."""
    z = pred.positions[:, 2]
    below = np.nonzero((z[:-1] >= height) & (z[1:] < height))[0]
    if len(below) == 0:
        return None
    lo, hi = float(pred.times[below[0]]), float(pred.times[below[0] + 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if query(pred, mid)[0][2] >= height:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
