"""High-level capture planner: catch configuration and catch time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ballistics import BallPrediction, query
from .errors import NoCapturePlan
from .model import RobotModel, base_position, forward_kinematics
from .optim import damped_pose_solve


@dataclass
class CapturePlannerConfig:
    lambda_base: float = 5.0
    lambda_arm: float = 1.0
    alpha: float = 2.0
    beta: float = 0.5
    t_grid_step: float = 0.02
    t_min: float = 0.1
    # horizontal container-to-base clearance at the catch; 0 disables the check
    base_clearance: float = 0.0

    def __post_init__(self):
        if min(self.lambda_base, self.lambda_arm, self.alpha, self.beta) <= 0:
            raise ValueError("lambda_base, lambda_arm, alpha and beta must be positive")
        if self.t_grid_step <= 0 or self.t_min < 0:
            raise ValueError("invalid time grid")

    def weights(self, model: RobotModel) -> np.ndarray:
        return np.array([self.lambda_base] * model.n_b + [self.lambda_arm] * model.n_m)


@dataclass
class CaptureSolution:
    q_ca: np.ndarray
    t_ca: float
    objective: float
    candidate_count: int


def capture_objective(q, t, q_0, weights, alpha) -> float:
    dq = np.asarray(q) - np.asarray(q_0)
    return 0.5 * (float(np.sum(weights * dq * dq)) - alpha * t * t)


def time_grid(t_min: float, step: float, horizon: float) -> np.ndarray:
    count = int(math.floor((horizon - t_min) / step + 1e-9)) + 1
    return np.round(t_min + step * np.arange(max(count, 0)), 12)


def reach_bound(model: RobotModel) -> tuple[float, float, float, float]:
    """Exact outer bound on where the container can be.

    The first arm joint's origin is fixed in the base frame, so the container
    lies within a ball around it whose radius sums the remaining link offsets.
    Returns (base travel, shoulder horizontal offset, shoulder height, reach).
    """
    a0, alpha0, d1, _ = model.arm_dh[0]
    shoulder = model.mount @ np.array([a0, -math.sin(alpha0) * d1, math.cos(alpha0) * d1, 1.0])
    rest = model.arm_dh[1:]
    reach = float(np.sum(np.abs(rest[:, 0])) + np.sum(np.abs(rest[:, 2]))) + float(
        np.linalg.norm(model.tool[:3, 3])
    )
    base = max(abs(model.q_min[1]), abs(model.q_max[1]))
    return float(base), float(math.hypot(shoulder[0], shoulder[1])), float(shoulder[2]), reach


def _maybe_reachable(p, bound) -> bool:
    base, offset, height, reach = bound
    horiz = max(0.0, math.hypot(p[0], p[1]) - base - offset)
    return math.hypot(horiz, p[2] - height) <= reach


def plan_capture(
    model: RobotModel,
    pred: BallPrediction,
    q_0,
    cfg: CapturePlannerConfig | None = None,
    admissible: Callable[[np.ndarray, float], bool] | None = None,
) -> CaptureSolution:
    """Grid search over catch time with a damped least-squares pose solve per time.

    Each grid time is solved from ``q_0`` and from the previous grid time's
    solution. Candidates must converge, clear the height floor and any
    configured base clearance, and pass ``admissible(q, t)`` if given.
    The lowest objective wins; ties go to the later time, then the smaller
    base displacement.
    """
    cfg = cfg or CapturePlannerConfig()
    q_0 = np.asarray(q_0, dtype=float)
    W = cfg.weights(model)
    bound = reach_bound(model)
    best = None
    best_key = None
    count = 0
    prev = None
    for t in time_grid(cfg.t_min, cfg.t_grid_step, pred.horizon):
        p, v = query(pred, float(t))
        speed = float(np.linalg.norm(v))
        # a converged solve puts the container within 1e-4 of p
        if speed < 1e-9 or p[2] < cfg.beta - 1e-3 or not _maybe_reachable(p, bound):
            prev = None
            continue
        direction = v / speed
        seeds = [q_0] if prev is None else [q_0, prev]
        converged = []
        for seed in seeds:
            res = damped_pose_solve(model, p, direction, seed, W)
            if res.converged:
                converged.append(res.q)
        if not converged:
            prev = None
            continue
        # the chain seed never depends on feasibility filters
        prev = min(converged, key=lambda q: capture_objective(q, t, q_0, W, cfg.alpha))
        for q in converged:
            if not _feasible(model, q, float(t), cfg, admissible):
                continue
            count += 1
            obj = capture_objective(q, float(t), q_0, W, cfg.alpha)
            key = (obj, -float(t), float(np.sum(np.abs(q[: model.n_b] - q_0[: model.n_b]))))
            if best_key is None or _better(key, best_key):
                best, best_key = (q, float(t), obj), key
    if best is None:
        raise NoCapturePlan("no feasible catch configuration on the time grid")
    return CaptureSolution(best[0].copy(), best[1], best[2], count)


def _better(key, ref, tol: float = 1e-12) -> bool:
    for a, b in zip(key, ref):
        if a < b - tol:
            return True
        if a > b + tol:
            return False
    return False


def _feasible(model, q, t, cfg, admissible) -> bool:
    pose = forward_kinematics(model, q)
    if pose.height < cfg.beta - 1e-9:
        return False
    if not model.within_limits(q):
        return False
    if cfg.base_clearance > 0:
        gap = np.linalg.norm(pose.position[:2] - base_position(q))
        if gap < cfg.base_clearance:
            return False
    return admissible is None or admissible(q, t)


@dataclass
class CaptureReport:
    position_error: float
    axis_angle: float
    height_margin: float
    within_limits: bool

    @property
    def position_ok(self) -> bool:
        return self.position_error <= 1e-3

    @property
    def axis_ok(self) -> bool:
        return self.axis_angle <= 1e-2

    @property
    def height_ok(self) -> bool:
        return self.height_margin >= -1e-6

    @property
    def ok(self) -> bool:
        return self.position_ok and self.axis_ok and self.height_ok and self.within_limits


def validate_capture(
    model: RobotModel, sol: CaptureSolution, pred: BallPrediction, cfg: CapturePlannerConfig | None = None
) -> CaptureReport:
    cfg = cfg or CapturePlannerConfig()
    pose = forward_kinematics(model, sol.q_ca)
    p, v = query(pred, sol.t_ca)
    want = -v / np.linalg.norm(v)
    cos = float(np.clip(pose.z_axis @ want / np.linalg.norm(pose.z_axis), -1.0, 1.0))
    return CaptureReport(
        position_error=float(np.linalg.norm(pose.position - p)),
        axis_angle=math.acos(cos),
        height_margin=pose.height - cfg.beta,
        within_limits=model.within_limits(sol.q_ca),
    )
