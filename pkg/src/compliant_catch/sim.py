"""Closed-loop catching simulator and Monte-Carlo harness.

A trial runs in two phases. The pre-catch phase observes the ball, plans the
catch and drives the robot there; it does not depend on the post-catch mode,
so ablations run it once per throw and share the result. The post-catch phase
tracks the cushioning sequence (or holds rigidly) and classifies the outcome.
"""

from __future__ import annotations

import enum
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .ballistics import GRAVITY, K_AD, flow, predict, query, run_filter
from .capture import CapturePlannerConfig, plan_capture
from .errors import NoCapturePlan, SafetyStop, SamplingExhausted
from .model import RobotModel, base_position, default_home, forward_kinematics, kinematics
from .plstm import PlstmParams, decay_label, forward
from .poc import ComplianceSequence, PocConfig, track_sequence
from .prc import PrcConfig, plan_prc, prc_duration

PSI_ROW_LIMIT = 10.0

class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    GROUND_CRASH = "GroundCrash"
    BASE_CRASH = "BaseCrash"
    NOT_CATCH = "NotCatch"


class Mode(str, enum.Enum):
    FULL = "full"
    NO_Z = "no-z"
    NO_XY = "no-xy"
    RIGID = "rigid"


@dataclass
class SimConfig:
    # throw start: cylinder around the robot, restricted to the side it faces
    cylinder_radius: float = 3.0
    cylinder_z: tuple = (1.0, 2.0)
    start_min_radius: float = 1.5
    start_azimuth_deg: float = 60.0
    # capture region: sector in front of the robot that every throw must cross
    region_radius: tuple = (0.4, 1.1)
    region_z: tuple = (0.5, 1.3)
    region_azimuth_deg: float = 50.0
    min_pass_time: float = 0.5
    # nominal throws aim at a region point reached after flight_time
    nominal_z: tuple = (0.7, 1.3)
    flight_time: tuple = (0.55, 1.1)
    max_throw_speed: float = 9.0
    # adversarial throws are built backwards from a fast catch state
    adversarial_fraction: float = 0.3
    adversarial_azimuth_deg: float = 20.0
    # steep family: low catch, ball falling steeply (elevation below horizontal)
    steep_radius: tuple = (0.85, 1.0)
    steep_z: tuple = (0.55, 0.7)
    steep_speed: tuple = (5.0, 6.5)
    steep_elevation_deg: tuple = (50.0, 65.0)
    steep_time: tuple = (0.6, 0.8)
    # near-base family: the fastest throw at the base that still starts inside the cylinder
    near_base_radius: tuple = (0.75, 0.9)
    near_base_z: tuple = (0.8, 1.0)
    near_base_speed: tuple = (4.2, 4.8)
    near_base_elevation_deg: tuple = (30.0, 40.0)
    near_base_time: tuple = (0.5, 0.55)
    obs_window: float = 0.1
    control_rate: float = 100.0
    meas_sigma: float = 0.002
    k_ad: float = K_AD
    horizon: float = 1.5
    pred_dt: float = 0.005
    aperture: float = 0.08
    max_alignment_deg: float = 30.0
    ground_margin: float = 0.05
    base_radius: float = 0.15
    ball_mass: float = 0.057

    def __post_init__(self):
        if not 0.0 <= self.adversarial_fraction <= 1.0:
            raise ValueError("adversarial_fraction must lie in [0, 1]")
        if self.obs_window <= 0 or self.control_rate <= 0:
            raise ValueError("observation window and control rate must be positive")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                setattr(self, f.name, tuple(value))


@dataclass
class TrialSpec:
    state: np.ndarray  # ball (p, v) at t = 0
    seed: int
    obs_window: float = 0.1
    control_rate: float = 100.0
    kind: str = "nominal"

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        if self.state.shape != (6,) or not np.all(np.isfinite(self.state)):
            raise ValueError("state must be a finite 6-vector")

    def to_dict(self) -> dict:
        return {"state": self.state.tolist(), "seed": self.seed, "obs_window": self.obs_window,
                "control_rate": self.control_rate, "kind": self.kind}


@dataclass
class Precatch:
    """Everything decided before the catch; shared by all post-catch modes."""

    spec: TrialSpec
    caught: bool
    reason: str = ""
    q_ca: np.ndarray | None = None
    t_ca: float = math.nan  # absolute time of the catch
    prc_duration: float = math.nan
    catch_error: float = math.nan
    alignment_deg: float = math.nan
    ball_velocity: np.ndarray | None = None  # true velocity at the catch
    network_input: np.ndarray | None = None  # predicted (p, v) at the catch


@dataclass
class TrialOutcome:
    outcome: Outcome
    catch_error: float | None
    impact_proxy: float
    logs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "catch_error": self.catch_error,
                "impact_proxy": self.impact_proxy, **self.logs}


Policy = Callable[[np.ndarray], np.ndarray]


def network_policy(params: PlstmParams) -> Policy:
    return lambda x: forward(params, x)


def decay_policy(tau: float = 0.2, dt: float = 0.02, length: int = 16) -> Policy:
    """Noise-free generator labels, for running the pipeline without a trained network."""
    return lambda x: decay_label(np.asarray(x)[3:], tau, dt, length)


def as_policy(source) -> Policy:
    return network_policy(source) if isinstance(source, PlstmParams) else source


# --- ball truth ------------------------------------------------------------


def propagate(state: np.ndarray, t: float, k_ad: float = K_AD) -> np.ndarray:
    """True ball state at time ``t`` from the (p, v) state at time 0."""
    return flow(state, t, k_ad)


def _aim(p0, target, flight_time: float, k_ad: float) -> np.ndarray:
    """Launch velocity that puts the drag-affected ball at ``target`` after ``flight_time``."""
    v0 = (target - p0) / flight_time + np.array([0.0, 0.0, 0.5 * GRAVITY * flight_time])
    for _ in range(30):
        miss = propagate(np.concatenate([p0, v0]), flight_time, k_ad)[:3] - target
        if np.linalg.norm(miss) < 1e-6:
            break
        v0 = v0 - miss / flight_time
    return v0


def _polar(rng, r_range, az_deg, z_range) -> np.ndarray:
    r = math.sqrt(rng.uniform(r_range[0] ** 2, r_range[1] ** 2))
    az = math.radians(rng.uniform(-az_deg, az_deg))
    return np.array([r * math.cos(az), r * math.sin(az), rng.uniform(*z_range)])


def _inbound(rng, catch, speed_range, elevation_range) -> np.ndarray:
    """Velocity heading horizontally at the robot's vertical axis and descending."""
    inward = -catch[:2] / np.hypot(catch[0], catch[1])
    el = math.radians(rng.uniform(*elevation_range))
    speed = rng.uniform(*speed_range)
    return speed * np.array([math.cos(el) * inward[0], math.cos(el) * inward[1], -math.sin(el)])


def propose(rng: np.random.Generator, cfg: SimConfig):
    """One throw proposal; returns (state at t = 0, kind, pass time)."""
    u = rng.uniform()
    if u < cfg.adversarial_fraction:
        steep = u < cfg.adversarial_fraction / 2
        kind = "steep" if steep else "near-base"
        radius, z, speed, elevation, time = (
            (cfg.steep_radius, cfg.steep_z, cfg.steep_speed, cfg.steep_elevation_deg, cfg.steep_time)
            if steep
            else (cfg.near_base_radius, cfg.near_base_z, cfg.near_base_speed, cfg.near_base_elevation_deg,
                  cfg.near_base_time)
        )
        catch = _polar(rng, radius, cfg.adversarial_azimuth_deg, z)
        v = _inbound(rng, catch, speed, elevation)
        T = rng.uniform(*time)
        return flow(np.concatenate([catch, v]), -T, cfg.k_ad), kind, T
    target = _polar(rng, cfg.region_radius, cfg.region_azimuth_deg, cfg.nominal_z)
    T = rng.uniform(*cfg.flight_time)
    p0 = _polar(rng, (cfg.start_min_radius, cfg.cylinder_radius), cfg.start_azimuth_deg, cfg.cylinder_z)
    return np.concatenate([p0, _aim(p0, target, T, cfg.k_ad)]), "nominal", T


def in_region(p, cfg: SimConfig) -> bool:
    r = math.hypot(p[0], p[1])
    az = math.degrees(math.atan2(p[1], p[0]))
    return (
        cfg.region_radius[0] - 1e-9 <= r <= cfg.region_radius[1] + 1e-9
        and cfg.region_z[0] - 1e-9 <= p[2] <= cfg.region_z[1] + 1e-9
        and abs(az) <= cfg.region_azimuth_deg + 1e-9
    )


def acceptable(state, pass_time: float, cfg: SimConfig) -> bool:
    """Start inside the cylinder, bounded launch speed, inside the capture region after the minimum time."""
    p0 = state[:3]
    r0 = math.hypot(p0[0], p0[1])
    if not cfg.start_min_radius - 1e-9 <= r0 <= cfg.cylinder_radius + 1e-9:
        return False
    if not cfg.cylinder_z[0] - 1e-9 <= p0[2] <= cfg.cylinder_z[1] + 1e-9:
        return False
    if np.linalg.norm(state[3:]) > cfg.max_throw_speed or pass_time <= cfg.min_pass_time:
        return False
    return in_region(propagate(state, pass_time, cfg.k_ad)[:3], cfg)


def sample_specs(n: int, seed: int, cfg: SimConfig | None = None):
    cfg = cfg or SimConfig()
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    specs = []
    attempts = 0
    while len(specs) < n:
        if attempts >= 100 * n:
            raise SamplingExhausted(f"accepted {len(specs)} of {n} throws in {attempts} attempts")
        attempts += 1
        state, kind, T = propose(rng, cfg)
        if acceptable(state, T, cfg):
            trial_seed = int(rng.integers(2**31))
            specs.append(TrialSpec(state, trial_seed, cfg.obs_window, cfg.control_rate, kind))
    return specs


# --- trial phases ----------------------------------------------------------


@dataclass
class Planners:
    capture: CapturePlannerConfig = field(default_factory=CapturePlannerConfig)
    prc: PrcConfig = field(default_factory=PrcConfig)
    poc: PocConfig = field(default_factory=PocConfig)
    home: np.ndarray = field(default_factory=default_home)


def run_precatch(model: RobotModel, spec: TrialSpec, cfg: SimConfig | None = None, planners: Planners | None = None):
    cfg = cfg or SimConfig()
    planners = planners or Planners()
    rng = np.random.default_rng(spec.seed)
    dt = 1.0 / spec.control_rate
    count = int(round(spec.obs_window / dt)) + 1
    times = dt * np.arange(count)
    truth = [spec.state[:3]]
    for k in range(1, count):
        truth.append(propagate(spec.state, times[k], cfg.k_ad)[:3])
    meas = np.array(truth) + rng.normal(0.0, cfg.meas_sigma, size=(count, 3))
    R = np.eye(3) * cfg.meas_sigma**2
    belief = run_filter(times, meas, cfg.k_ad, R=R)[-1]
    pred = predict(belief, cfg.horizon, cfg.pred_dt, cfg.k_ad)

    home = planners.home
    capture_cfg = planners.capture
    if capture_cfg.base_clearance < planners.poc.r_safe:
        # start the post-catch phase inside the base barrier's safe set
        capture_cfg = replace(capture_cfg, base_clearance=planners.poc.r_safe)

    def admissible(q, t):
        return prc_duration(model, home, q, planners.prc) <= t

    try:
        sol = plan_capture(model, pred, home, capture_cfg, admissible)
    except NoCapturePlan:
        return Precatch(spec, False, "no feasible catch plan")
    traj = plan_prc(model, home, sol.q_ca, planners.prc)
    t_ca = belief.t + sol.t_ca
    # joint position control tracks the quintic exactly and then holds q_ca
    q_final = traj.sample(traj.duration).q
    pose = forward_kinematics(model, q_final)
    ball = propagate(spec.state, t_ca, cfg.k_ad)
    err = float(np.linalg.norm(pose.position - ball[:3]))
    v = ball[3:]
    cos = float(np.clip(-pose.z_axis @ v / np.linalg.norm(v), -1.0, 1.0))
    align = math.degrees(math.acos(cos))
    p_hat, v_hat = query(pred, sol.t_ca)
    pre = Precatch(spec, True, "", q_final, t_ca, traj.duration, err, align, v.copy(), np.concatenate([p_hat, v_hat]))
    if err > cfg.aperture or align >= cfg.max_alignment_deg:
        pre.caught = False
        pre.reason = "ball missed the container"
    return pre


def mode_config(poc: PocConfig, mode: Mode) -> PocConfig:
    if mode is Mode.NO_Z:
        return replace(poc, use_z_barrier=False)
    if mode is Mode.NO_XY:
        return replace(poc, use_xy_barrier=False)
    return poc


def _bounded(psi) -> np.ndarray:
    psi = np.array(psi, dtype=float)
    norms = np.linalg.norm(psi, axis=1, keepdims=True)
    return psi * np.minimum(1.0, PSI_ROW_LIMIT / np.maximum(norms, 1e-300))


def run_postcatch(model: RobotModel, pre: Precatch, policy, mode: Mode, cfg: SimConfig | None = None,
                  planners: Planners | None = None) -> TrialOutcome:
    cfg = cfg or SimConfig()
    planners = planners or Planners()
    mode = Mode(mode)
    base_logs = {"kind": pre.spec.kind, "seed": pre.spec.seed, "mode": mode.value}
    if not pre.caught:
        return TrialOutcome(Outcome.NOT_CATCH, None, 0.0, {**base_logs, "reason": pre.reason})
    logs = {**base_logs, "t_ca": pre.t_ca, "prc_duration": pre.prc_duration, "alignment_deg": pre.alignment_deg}
    tick = planners.poc.tick
    m = cfg.ball_mass
    if mode is Mode.RIGID:
        impact = m * float(np.linalg.norm(pre.ball_velocity)) / tick
        return TrialOutcome(Outcome.SUCCESS, pre.catch_error, impact, logs)

    psi = ComplianceSequence(_bounded(as_policy(policy)(pre.network_input)), rate=1.0 / tick)
    poc_cfg = mode_config(planners.poc, mode)
    try:
        records = track_sequence(model, pre.q_ca, psi, poc_cfg)
        logs["safety_stop"] = False
    except SafetyStop as exc:
        # the controller halts the arm where it is
        records = list(exc.log)
        records[-1].qd = np.zeros(model.n)
        logs["safety_stop"] = True

    outcome = Outcome.SUCCESS
    prev_v = pre.ball_velocity
    peak = 0.0
    min_z, min_gap = math.inf, math.inf
    for rec in records:
        gap = float(np.linalg.norm(rec.container[:2] - base_position(rec.q)))
        min_z, min_gap = min(min_z, rec.container[2]), min(min_gap, gap)
        if rec.container[2] < cfg.ground_margin:
            outcome = Outcome.GROUND_CRASH
            break
        if gap < cfg.base_radius:
            outcome = Outcome.BASE_CRASH
            break
        _, J = kinematics(model, rec.q)
        v_c = J[:3] @ rec.qd
        # the ball rides in the container, so its velocity jumps to the container's
        peak = max(peak, float(np.linalg.norm(v_c - prev_v)))
        prev_v = v_c
    if outcome is Outcome.SUCCESS and np.linalg.norm(prev_v) > 0:
        peak = max(peak, float(np.linalg.norm(prev_v)))
    logs.update(min_container_z=min_z, min_base_gap=min_gap, ticks=len(records))
    err = pre.catch_error if outcome is Outcome.SUCCESS else None
    return TrialOutcome(outcome, err, m * peak / tick, logs)


def run_trial(model: RobotModel, spec: TrialSpec, policy, mode: Mode = Mode.FULL, cfg: SimConfig | None = None,
              planners: Planners | None = None) -> TrialOutcome:
    pre = run_precatch(model, spec, cfg, planners)
    return run_postcatch(model, pre, policy, mode, cfg, planners)


# --- experiments -----------------------------------------------------------


def summarize(outcomes, mode: Mode, seed: int) -> dict:
    n = len(outcomes)
    counts = {o.value: 0 for o in Outcome}
    for out in outcomes:
        counts[out.outcome.value] += 1
    impacts = [o.impact_proxy for o in outcomes if o.outcome is Outcome.SUCCESS]
    errors = [o.catch_error for o in outcomes if o.outcome is Outcome.SUCCESS]
    stats = {}
    if impacts:
        stats = {"mean": statistics.fmean(impacts), "median": statistics.median(impacts), "max": max(impacts)}
    return {
        "mode": Mode(mode).value,
        "seed": seed,
        "n": n,
        "counts": counts,
        "rates": {k: v / n for k, v in counts.items()},
        "impact_proxy": stats,
        "catch_error_mean": statistics.fmean(errors) if errors else None,
    }


def monte_carlo(model: RobotModel, n: int, seed: int, mode: Mode, policy, cfg: SimConfig | None = None,
                planners: Planners | None = None, keep_trials: bool = False) -> dict:
    cfg = cfg or SimConfig()
    specs = sample_specs(n, seed, cfg)
    outcomes = [run_trial(model, s, policy, mode, cfg, planners) for s in specs]
    report = summarize(outcomes, mode, seed)
    if keep_trials:
        report["trials"] = [o.to_dict() for o in outcomes]
    return report


def ablate(model: RobotModel, n: int, seed: int, policy, cfg: SimConfig | None = None,
           planners: Planners | None = None, modes=tuple(Mode)) -> dict:
    """All modes on the same throws, sharing each throw's pre-catch phase."""
    cfg = cfg or SimConfig()
    specs = sample_specs(n, seed, cfg)
    pres = [run_precatch(model, s, cfg, planners) for s in specs]
    results = {Mode(m): [run_postcatch(model, p, policy, m, cfg, planners) for p in pres] for m in modes}
    report = {"seed": seed, "n": n, "modes": {m.value: summarize(outs, m, seed) for m, outs in results.items()}}
    if Mode.FULL in results and Mode.RIGID in results:
        report["impact_pairs"] = impact_comparison(results[Mode.FULL], results[Mode.RIGID])
    return report


def impact_comparison(full, rigid) -> dict:
    """Per-throw impact reduction of cushioning over rigid holding, on throws both caught safely."""
    reductions = []
    for a, b in zip(full, rigid):
        if a.outcome is Outcome.SUCCESS and b.outcome is Outcome.SUCCESS and b.impact_proxy > 0:
            reductions.append(1.0 - a.impact_proxy / b.impact_proxy)
    return {
        "pairs": len(reductions),
        "reduced": sum(r > 0 for r in reductions),
        "median_reduction": statistics.median(reductions) if reductions else None,
        "min_reduction": min(reductions) if reductions else None,
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_dict(cfg: SimConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
