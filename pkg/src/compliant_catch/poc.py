"""Post-catch planner: slack-relaxed twist tracking under ground and base barriers.

Each tick solves

    min  1/2 (|qd|^2 + mu |delta|^2)
    s.t. J qd = psi_i + delta
         dz/dt >= -k_z f,    f = z_c - z_safe
         dg/dt >= -k_xy g,   g = |p_c,xy - p_base| - r_safe
         joint velocity and position-limit boxes

with the slack eliminated (``delta = J qd - psi_i``). By default the barrier
decay is the discrete-time form ``k = gamma / tick``, so that a barrier
value shrinks by at most the fraction ``gamma`` per tick.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SafetyStop
from .model import RobotModel, base_position, kinematics
from .optim import QpProblem, solve_qp

ACTIVE_TOL = 1e-7


@dataclass
class PocConfig:
    gamma_z: float = 0.1
    gamma_xy: float = 0.1
    z_safe: float = 0.2
    r_safe: float = 0.3
    slack_weight: float = 1000.0
    tick: float = 0.02
    discrete_cbf: bool = True
    use_z_barrier: bool = True
    use_xy_barrier: bool = True

    def __post_init__(self):
        if self.gamma_z <= 0 or self.gamma_xy <= 0 or self.slack_weight <= 0:
            raise ValueError("barrier gains and slack weight must be positive")
        if self.tick <= 0:
            raise ValueError("tick must be positive")

    @property
    def rate_z(self) -> float:
        return self.gamma_z / self.tick if self.discrete_cbf else self.gamma_z

    @property
    def rate_xy(self) -> float:
        return self.gamma_xy / self.tick if self.discrete_cbf else self.gamma_xy


@dataclass
class ComplianceSequence:
    """Container twist commands (vx, vy, vz, wx, wy, wz), one row per tick."""

    psi: np.ndarray
    rate: float = 50.0

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if self.psi.shape[1] != 6 or len(self.psi) > 16:
            raise ValueError("psi must be an L x 6 matrix with L <= 16")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi has non-finite entries")
        if np.any(np.linalg.norm(self.psi, axis=1) > 10.0):
            raise ValueError("psi rows exceed the 10 m/s sanity bound")

    def __len__(self):
        return len(self.psi)


def barrier_values(model: RobotModel, q, cfg: PocConfig, pose=None):
    """(f, g): ground clearance above z_safe and base clearance beyond r_safe."""
    if pose is None:
        pose, _ = kinematics(model, q)
    offset = pose.position[:2] - base_position(q)
    return pose.height - cfg.z_safe, float(np.hypot(*offset)) - cfg.r_safe


@dataclass
class PocStep:
    qd: np.ndarray
    delta: np.ndarray
    active_z: bool
    active_xy: bool


def _base_velocity_map(q) -> np.ndarray:
    """d(base xy)/dq, nonzero only in the two virtual base columns."""
    phi, d = q[0], q[1]
    M = np.zeros((2, len(q)))
    M[:, 0] = (-d * math.sin(phi), d * math.cos(phi))
    M[:, 1] = (math.cos(phi), math.sin(phi))
    return M


def tracking_qp(J, psi_i, mu, barrier_rows=(), barrier_rhs=(), lo=None, hi=None) -> QpProblem:
    """QP in qd alone for a given Jacobian: slack eliminated, barriers and boxes as rows."""
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    H = np.eye(n) + mu * J.T @ J
    H = 0.5 * (H + H.T)
    c = -mu * J.T @ np.asarray(psi_i, dtype=float)
    rows = [np.asarray(r, dtype=float) for r in barrier_rows]
    rhs = list(barrier_rhs)
    eye = np.eye(n)
    if lo is not None:
        rows.extend(eye)
        rhs.extend(lo)
    if hi is not None:
        rows.extend(-eye)
        rhs.extend(-np.asarray(hi))
    if not rows:
        return QpProblem(H, c)
    return QpProblem(H, c, A_in=np.vstack(rows), b_in=np.asarray(rhs, dtype=float))


def damped_min_norm(J, psi_i, mu) -> np.ndarray:
    """Closed-form tracking solution when no inequality is active."""
    J = np.asarray(J, dtype=float)
    return J.T @ np.linalg.solve(J @ J.T + np.eye(len(J)) / mu, psi_i)


def build_qp(model: RobotModel, q, psi_i, cfg: PocConfig, J=None, pose=None):
    """Assemble the tick QP; returns (problem, labels of the barrier rows, J)."""
    q = np.asarray(q, dtype=float)
    if J is None or pose is None:
        pose, J = kinematics(model, q)
    rows, rhs, labels = [], [], []
    f, g = barrier_values(model, q, cfg, pose)
    if cfg.use_z_barrier:
        rows.append(J[2])
        rhs.append(-cfg.rate_z * f)
        labels.append("z")
    if cfg.use_xy_barrier:
        offset = pose.position[:2] - base_position(q)
        dist = float(np.hypot(*offset))
        if dist > 1e-9:
            # g depends on the base position too, so differentiate the offset
            u = offset / dist
            rows.append(u @ (J[:2] - _base_velocity_map(q)))
            rhs.append(-cfg.rate_xy * g)
            labels.append("xy")
    dt = cfg.tick
    lo = np.maximum(-model.qd_max, (model.q_min - q) / dt)
    hi = np.minimum(model.qd_max, (model.q_max - q) / dt)
    return tracking_qp(J, psi_i, cfg.slack_weight, rows, rhs, lo, hi), labels, J


def poc_step(model: RobotModel, q, psi_i, cfg: PocConfig | None = None) -> PocStep:
    cfg = cfg or PocConfig()
    prob, labels, J = build_qp(model, q, psi_i, cfg)
    sol = solve_qp(prob)
    if not sol.ok:
        raise SafetyStop(f"post-catch QP returned {sol.status.value}")
    qd = sol.x
    slack = prob.A_in[: len(labels)] @ qd - prob.b_in[: len(labels)]
    active = {lab: bool(s < ACTIVE_TOL) for lab, s in zip(labels, slack)}
    return PocStep(qd, J @ qd - np.asarray(psi_i, dtype=float), active.get("z", False), active.get("xy", False))


@dataclass
class PocRecord:
    t: float
    q: np.ndarray
    qd: np.ndarray
    delta: np.ndarray
    f: float
    g: float
    active_z: bool = False
    active_xy: bool = False
    container: np.ndarray = field(default_factory=lambda: np.zeros(3))


def track_sequence(model: RobotModel, q_ca, psi: ComplianceSequence, cfg: PocConfig | None = None):
    """Roll the tick QP over ``psi`` with Euler joint integration.

    The log holds one record per commanded tick plus a final resting record.
    """
    cfg = cfg or PocConfig()
    q = np.asarray(q_ca, dtype=float).copy()
    dt = 1.0 / psi.rate
    log = []
    for i, row in enumerate(psi.psi):
        pose, _ = kinematics(model, q)
        f, g = barrier_values(model, q, cfg, pose)
        try:
            step = poc_step(model, q, row, cfg)
        except SafetyStop as exc:
            log.append(PocRecord(i * dt, q.copy(), np.zeros(model.n), -row, f, g, container=pose.position.copy()))
            raise SafetyStop(str(exc), log) from None
        log.append(
            PocRecord(i * dt, q.copy(), step.qd, step.delta, f, g, step.active_z, step.active_xy, pose.position.copy())
        )
        q = q + step.qd * dt
    pose, _ = kinematics(model, q)
    f, g = barrier_values(model, q, cfg, pose)
    log.append(PocRecord(len(psi) * dt, q.copy(), np.zeros(model.n), np.zeros(6), f, g, container=pose.position.copy()))
    return log


def export_csv(log, path) -> None:
    n = len(log[0].q)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)]
            + ["slack_norm", "f", "g", "active_z", "active_xy"]
        )
        for r in log:
            w.writerow(
                [f"{r.t:.6f}"]
                + [f"{x:.9g}" for x in r.q]
                + [f"{x:.9g}" for x in r.qd]
                + [f"{np.linalg.norm(r.delta):.9g}", f"{r.f:.9g}", f"{r.g:.9g}", int(r.active_z), int(r.active_xy)]
            )
