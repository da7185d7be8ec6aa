import csv

import numpy as np
import pytest

from compliant_catch.errors import SafetyStop
from compliant_catch.model import forward_kinematics, kinematics
from compliant_catch.optim import solve_qp
from compliant_catch.poc import (
    ComplianceSequence,
    PocConfig,
    barrier_values,
    build_qp,
    damped_min_norm,
    export_csv,
    poc_step,
    track_sequence,
    tracking_qp,
)


def random_psi(rng, length=16, scale=3.0):
    psi = rng.normal(size=(length, 6))
    psi[:, 3:] *= 0.5
    return psi * scale / np.linalg.norm(psi, axis=1, keepdims=True) * rng.uniform(0, 1, (length, 1))


def test_equal_weights_halve_the_command():
    psi = np.array([1.0, -2.0, 0.5, 0.1, 0.0, -0.3])
    sol = solve_qp(tracking_qp(np.eye(6), psi, 1.0))
    assert np.allclose(sol.x, psi / 2, atol=1e-12)


def test_heavy_slack_weight_tracks_closely():
    psi = np.array([1.0, -2.0, 0.5, 0.1, 0.0, -0.3])
    sol = solve_qp(tracking_qp(np.eye(6), psi, 1000.0))
    assert np.linalg.norm(sol.x - psi) < 2e-3 * np.linalg.norm(psi)
    assert np.allclose(sol.x, 1000 / 1001 * psi, atol=1e-12)


def test_step_matches_closed_form_when_nothing_is_active(model, home):
    cfg = PocConfig(use_z_barrier=False, use_xy_barrier=False)
    psi = np.array([0.1, 0.05, -0.1, 0.0, 0.2, 0.0])
    _, J = kinematics(model, home)
    step = poc_step(model, home, psi, cfg)
    # the same closed form, written the other way round: (I/mu + J'J)^-1 J' psi
    expected = np.linalg.solve(np.eye(9) / cfg.slack_weight + J.T @ J, J.T @ psi)
    assert np.max(np.abs(step.qd - expected)) < 1e-8
    assert np.max(np.abs(step.qd - damped_min_norm(J, psi, cfg.slack_weight))) < 1e-8


def test_zero_command_gives_zero_motion(model, home):
    step = poc_step(model, home, np.zeros(6))
    assert np.max(np.abs(step.qd)) < 1e-12
    assert not step.active_z and not step.active_xy


def test_barrier_values_at_home(model, home):
    cfg = PocConfig()
    pose = forward_kinematics(model, home)
    f, g = barrier_values(model, home, cfg)
    assert f == pytest.approx(pose.height - 0.2)
    assert g == pytest.approx(np.hypot(*pose.position[:2]) - 0.3)


def test_barrier_rows_are_active_on_the_boundary(model, home):
    pose = forward_kinematics(model, home)
    cfg = PocConfig(z_safe=pose.height)
    step = poc_step(model, home, np.array([0, 0, -1.0, 0, 0, 0]), cfg)
    _, J = kinematics(model, home)
    assert step.active_z
    assert J[2] @ step.qd >= -1e-9


def test_downward_command_respects_the_ground_barrier(model, home):
    cfg = PocConfig()
    q = home.copy()
    heights = []
    for _ in range(6):
        log = track_sequence(model, q, ComplianceSequence(np.tile([0, 0, -1.0, 0, 0, 0], (16, 1))), cfg)
        heights.extend(r.container[2] for r in log)
        q = log[-1].q
    assert heights[-1] < heights[0] - 0.3
    assert min(heights) >= cfg.z_safe - 1e-3


def test_heavier_slack_weight_tracks_better(model, home):
    psi = np.array([0.2, 0.1, -0.1, 0.0, 0.0, 0.1])
    errors = []
    for mu in (1.0, 10.0, 100.0, 1000.0):
        step = poc_step(model, home, psi, PocConfig(slack_weight=mu))
        errors.append(np.linalg.norm(step.delta))
    assert all(a > b for a, b in zip(errors, errors[1:]))


def test_random_commands_keep_both_barriers(model, home):
    rng = np.random.default_rng(99)
    cfg = PocConfig()
    worst_f = worst_g = np.inf
    for _ in range(60):
        q = home + rng.normal(0, 0.1, 9)
        q = model.clamp(q)
        log = track_sequence(model, q, ComplianceSequence(random_psi(rng)), cfg)
        worst_f = min(worst_f, min(r.f for r in log))
        worst_g = min(worst_g, min(r.g for r in log))
    assert worst_f >= -1e-3
    assert worst_g >= -1e-3


def test_velocity_and_position_boxes(model, home):
    cfg = PocConfig()
    prob, labels, _ = build_qp(model, home, np.array([5.0, 0, 0, 0, 0, 0]), cfg)
    assert labels == ["z", "xy"]
    step = poc_step(model, home, np.array([5.0, 0, 0, 0, 0, 0]), cfg)
    assert np.all(np.abs(step.qd) <= model.qd_max + 1e-9)
    assert model.within_limits(home + step.qd * cfg.tick, tol=1e-9)


def test_infeasible_tick_raises_safety_stop(model, home):
    # a container already below the ground barrier cannot satisfy it under the velocity box
    pose = forward_kinematics(model, home)
    cfg = PocConfig(z_safe=pose.height + 5.0)
    with pytest.raises(SafetyStop):
        poc_step(model, home, np.zeros(6), cfg)


def test_log_layout(model, home, tmp_path):
    log = track_sequence(model, home, ComplianceSequence(np.zeros((4, 6))))
    assert len(log) == 5
    assert [r.t for r in log] == pytest.approx([0, 0.02, 0.04, 0.06, 0.08])
    path = tmp_path / "poc.csv"
    export_csv(log, path)
    rows = list(csv.reader(open(path)))
    assert len(rows) == 6
    assert rows[0][-3:] == ["g", "active_z", "active_xy"]


def test_sequence_validation():
    with pytest.raises(ValueError):
        ComplianceSequence(np.zeros((17, 6)))
    with pytest.raises(ValueError):
        ComplianceSequence(np.full((2, 6), np.nan))
    with pytest.raises(ValueError):
        ComplianceSequence(np.full((2, 6), 5.0))
    with pytest.raises(ValueError):
        PocConfig(slack_weight=0.0)
