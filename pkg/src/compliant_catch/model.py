"""Whole-body kinematics of a mobile base carrying a serial arm with a container.

The base is described by two virtual joints ``(phi, d)``: the base sits at
``(d cos phi, d sin phi)`` with heading ``phi``. Arm joints follow modified
(Craig) DH rows ``(a, alpha, d, theta_offset)`` where ``a`` and ``alpha`` are
the link parameters of the preceding link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidConfiguration

N_BASE = 2
JACOBIAN_STEP = 1e-6


def transform(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous transform from a translation and fixed-axis roll/pitch/yaw."""
    T = np.eye(4)
    T[:3, :3] = Rotation.from_euler("xyz", rpy).as_matrix()
    T[:3, 3] = xyz
    return T


def dh_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [ct, -st, 0.0, a],
            [st * ca, ct * ca, -sa, -sa * d],
            [st * sa, ct * sa, ca, ca * d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def base_transform(phi: float, d: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [c, -s, 0.0, d * c],
            [s, c, 0.0, d * s],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


@dataclass
class RobotModel:
    arm_dh: np.ndarray
    mount: np.ndarray
    tool: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray
    base_kind: str = "polar"

    def __post_init__(self):
        self.arm_dh = np.atleast_2d(np.asarray(self.arm_dh, dtype=float))
        if self.arm_dh.shape[1] != 4:
            raise InvalidConfiguration("DH rows must have 4 entries (a, alpha, d, theta_offset)")
        self.mount = np.asarray(self.mount, dtype=float)
        self.tool = np.asarray(self.tool, dtype=float)
        if self.mount.shape != (4, 4) or self.tool.shape != (4, 4):
            raise InvalidConfiguration("mount and tool must be 4x4 transforms")
        if self.base_kind != "polar":
            raise InvalidConfiguration(f"unsupported base kind {self.base_kind!r}")
        n = self.n
        for name in ("q_min", "q_max", "qd_max", "qdd_max"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidConfiguration(f"{name} must have length {n}, got {arr.shape}")
            setattr(self, name, arr)
        if np.any(self.q_min >= self.q_max):
            raise InvalidConfiguration("q_min must be strictly below q_max")
        if np.any(self.qd_max <= 0) or np.any(self.qdd_max <= 0):
            raise InvalidConfiguration("velocity and acceleration limits must be positive")

    @property
    def n_b(self) -> int:
        return N_BASE

    @property
    def n_m(self) -> int:
        return len(self.arm_dh)

    @property
    def n(self) -> int:
        return N_BASE + self.n_m

    def within_limits(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.q_min - tol) and np.all(q <= self.q_max + tol))

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.q_min, self.q_max)


@dataclass(frozen=True)
class ContainerPose:
    matrix: np.ndarray = field(repr=False)

    @property
    def position(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def z_axis(self) -> np.ndarray:
        return self.matrix[:3, 2]

    @property
    def height(self) -> float:
        return float(self.matrix[2, 3])


def check_configuration(model: RobotModel, q, checked: bool = False) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise InvalidConfiguration(f"expected configuration of length {model.n}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidConfiguration("configuration has non-finite entries")
    if checked and not model.within_limits(q):
        raise InvalidConfiguration("configuration outside joint limits")
    return q


def _chain(model: RobotModel, q: np.ndarray):
    """Yield world transforms: base, then each arm joint frame, then the container."""
    T = base_transform(q[0], q[1])
    yield T
    T = T @ model.mount
    for (a, alpha, d, offset), qi in zip(model.arm_dh, q[N_BASE:]):
        T = T @ dh_transform(a, alpha, d, qi + offset)
        yield T
    yield T @ model.tool


def forward_kinematics(model: RobotModel, q) -> ContainerPose:
    q = check_configuration(model, q)
    T = None
    for T in _chain(model, q):
        pass
    return ContainerPose(T)


def base_position(q) -> np.ndarray:
    """Planar position of the mobile base origin."""
    return np.array([q[1] * math.cos(q[0]), q[1] * math.sin(q[0])])


def _rotation_log(R: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(R).as_rotvec()


def extended_jacobian(model: RobotModel, q, h: float = JACOBIAN_STEP) -> np.ndarray:
    """6 x n whole-body Jacobian by central differences of forward kinematics.

    Angular rows use the rotation log of ``R(q + h e_j) R(q - h e_j)^T`` so the
    result is the world-frame angular velocity.
    """
    q = check_configuration(model, q)
    J = np.zeros((6, model.n))
    for j in range(model.n):
        dq = np.zeros(model.n)
        dq[j] = h
        Tp = forward_kinematics(model, q + dq).matrix
        Tm = forward_kinematics(model, q - dq).matrix
        J[:3, j] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        J[3:, j] = _rotation_log(Tp[:3, :3] @ Tm[:3, :3].T) / (2 * h)
    return J


def kinematics(model: RobotModel, q):
    """Container pose and analytic geometric Jacobian from a single chain pass.

    This is the fast path used inside the iterative solvers; it agrees with
    :func:`extended_jacobian` to finite-difference accuracy.
    """
    q = check_configuration(model, q)
    frames = list(_chain(model, q))
    Tc = frames[-1]
    p = Tc[:3, 3]
    J = np.zeros((6, model.n))
    # phi rotates the whole robot about the world z axis through the origin
    J[:3, 0] = (-p[1], p[0], 0.0)
    J[5, 0] = 1.0
    J[:3, 1] = (math.cos(q[0]), math.sin(q[0]), 0.0)
    stack = np.array(frames[1:-1])
    z = stack[:, :3, 2]
    r = p - stack[:, :3, 3]
    # z x r, written out: np.cross is slow on tiny arrays
    J[0, N_BASE:] = z[:, 1] * r[:, 2] - z[:, 2] * r[:, 1]
    J[1, N_BASE:] = z[:, 2] * r[:, 0] - z[:, 0] * r[:, 2]
    J[2, N_BASE:] = z[:, 0] * r[:, 1] - z[:, 1] * r[:, 0]
    J[3:, N_BASE:] = z.T
    return ContainerPose(Tc), J


def default_model() -> RobotModel:
    """Generic 7-DoF spherical-shoulder, spherical-wrist arm on a polar base."""
    half_pi = math.pi / 2
    arm_dh = [
        (0.0, 0.0, 0.34, 0.0),
        (0.0, -half_pi, 0.0, 0.0),
        (0.0, half_pi, 0.40, 0.0),
        (0.0, half_pi, 0.0, 0.0),
        (0.0, -half_pi, 0.40, 0.0),
        (0.0, -half_pi, 0.0, 0.0),
        (0.0, half_pi, 0.0, 0.0),
    ]
    q_min = [-math.pi, -1.0, -2.9, -2.6, -2.9, -2.6, -2.9, -2.6, -3.0]
    q_max = [math.pi, 1.0, 2.9, 2.6, 2.9, 2.6, 2.9, 2.6, 3.0]
    qd_max = [1.0, 1.0, 5.0, 5.0, 5.0, 5.0, 6.0, 6.0, 6.0]
    qdd_max = [4.0, 4.0, 60.0, 60.0, 60.0, 60.0, 60.0, 60.0, 60.0]
    return RobotModel(
        arm_dh=np.array(arm_dh),
        mount=transform((0.15, 0.0, 0.10)),
        tool=transform((0.0, 0.0, 0.20)),
        q_min=np.array(q_min),
        q_max=np.array(q_max),
        qd_max=np.array(qd_max),
        qdd_max=np.array(qdd_max),
    )


def default_home() -> np.ndarray:
    """Ready pose: arm raised in front of the base, container facing up and forward."""
    return np.array([0.0, 0.0, 0.0, 1.0, 0.0, -0.9, 0.0, -1.3, 0.0])
