"""Pre-catch joint planner: minimum-time estimate plus a rest-to-rest quintic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import RobotModel

T_FLOOR = 1e-3
PEAK_VEL = 1.875  # 15/8
PEAK_ACC = 10.0 / math.sqrt(3.0)
# q(s) = q0 + dq * (10 s^3 - 15 s^4 + 6 s^5)
_SHAPE = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


@dataclass
class PrcConfig:
    time_scale: float = 1.5
    reinflate: float = 1.1

    def __post_init__(self):
        if self.time_scale <= 1.0:
            raise ValueError("time_scale must exceed 1")


def min_time(dq: float, qd_max: float, qdd_max: float) -> float:
    """Bang-coast-bang duration for a joint travelling ``dq``."""
    if dq < 0 or qd_max <= 0 or qdd_max <= 0:
        raise ValueError("dq must be non-negative and limits positive")
    t_acc = qd_max / qdd_max
    dq_acc = 0.5 * qdd_max * t_acc**2
    if dq < 2 * dq_acc:
        return 2.0 * math.sqrt(dq / qdd_max)
    return 2.0 * t_acc + (dq - qdd_max * t_acc**2) / qd_max


class JointSample(NamedTuple):
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    clamped: bool


@dataclass(frozen=True)
class QuinticTrajectory:
    q_0: np.ndarray
    q_ca: np.ndarray
    duration: float
    coeffs: np.ndarray  # n x 6, ascending powers of normalised time

    def sample(self, t: float) -> JointSample:
        return sample(self, t)


def quintic(q_0, q_ca, duration: float) -> QuinticTrajectory:
    q_0 = np.asarray(q_0, dtype=float)
    q_ca = np.asarray(q_ca, dtype=float)
    coeffs = np.outer(q_ca - q_0, _SHAPE)
    coeffs[:, 0] = q_0
    return QuinticTrajectory(q_0.copy(), q_ca.copy(), float(duration), coeffs)


def plan_prc(model: RobotModel, q_0, q_ca, cfg: PrcConfig | None = None) -> QuinticTrajectory:
    """Quintic from ``q_0`` to ``q_ca`` over the scaled slowest-joint time.

    The duration is stretched further while any joint's quintic peak velocity
    or acceleration would exceed its limit.
    """
    cfg = cfg or PrcConfig()
    q_0 = np.asarray(q_0, dtype=float)
    q_ca = np.asarray(q_ca, dtype=float)
    dq = np.abs(q_ca - q_0)
    times = [min_time(float(d), float(v), float(a)) for d, v, a in zip(dq, model.qd_max, model.qdd_max)]
    T = cfg.time_scale * max(times)
    if T <= 0.0:
        return quintic(q_0, q_ca, T_FLOOR)
    while np.any(PEAK_VEL * dq / T > model.qd_max * (1 + 1e-12)) or np.any(
        PEAK_ACC * dq / T**2 > model.qdd_max * (1 + 1e-12)
    ):
        T *= cfg.reinflate
    return quintic(q_0, q_ca, T)


def prc_duration(model: RobotModel, q_0, q_ca, cfg: PrcConfig | None = None) -> float:
    return plan_prc(model, q_0, q_ca, cfg).duration


def sample(traj: QuinticTrajectory, t: float) -> JointSample:
    """Position, velocity and acceleration at time ``t`` (clamped to the segment)."""
    T = traj.duration
    clamped = t < 0.0 or t > T
    s = min(max(t, 0.0), T) / T
    c = traj.coeffs
    powers = np.array([1.0, s, s**2, s**3, s**4, s**5])
    q = c @ powers
    qd = (c[:, 1:] @ (np.arange(1, 6) * powers[:5])) / T
    qdd = (c[:, 2:] @ (np.array([2.0, 6.0, 12.0, 20.0]) * powers[:4])) / T**2
    return JointSample(q, qd, qdd, clamped)


def export_csv(traj: QuinticTrajectory, path, rate: float = 100.0) -> None:
    n = len(traj.q_0)
    steps = max(1, int(math.ceil(traj.duration * rate)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)])
        for k in range(steps + 1):
            t = min(k / rate, traj.duration)
            smp = sample(traj, t)
            w.writerow([f"{t:.6f}"] + [f"{x:.9g}" for x in smp.q] + [f"{x:.9g}" for x in smp.qd])
