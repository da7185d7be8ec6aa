import numpy as np
import pytest

from compliant_catch.ballistics import BallBelief, flow, predict
from compliant_catch.capture import (
    CapturePlannerConfig,
    CaptureSolution,
    capture_objective,
    plan_capture,
    time_grid,
    validate_capture,
)
from compliant_catch.errors import NoCapturePlan
from compliant_catch.model import forward_kinematics


def throw_through(catch, velocity, t_catch=0.6):
    x0 = flow(np.concatenate([catch, velocity]), -t_catch)
    return predict(BallBelief(x0, np.zeros((6, 6))), 1.0, 0.005)


def seeded_throws(count, seed=5):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        catch = np.array([rng.uniform(1.0, 1.4), rng.uniform(-0.4, 0.4), rng.uniform(0.6, 1.1)])
        yield throw_through(catch, np.array([-4.0, rng.uniform(-1, 1), -2.0]))


def test_later_catch_wins_on_equal_joint_cost():
    w = np.ones(9)
    q0 = np.zeros(9)
    q = np.full(9, 0.1)
    diff = capture_objective(q, 0.8, q0, w, 2.0) - capture_objective(q, 0.4, q0, w, 2.0)
    assert diff == pytest.approx(-0.48, abs=1e-12)


def test_objective_weights_base_and_arm(model):
    cfg = CapturePlannerConfig()
    q0 = np.zeros(9)
    q = np.zeros(9)
    q[1], q[4] = 0.2, 0.2
    # 1/2 (5 * 0.04 + 1 * 0.04 - 2 * 0.25)
    assert capture_objective(q, 0.5, q0, cfg.weights(model), 2.0) == pytest.approx(-0.13)


def test_time_grid():
    assert np.allclose(time_grid(0.1, 0.02, 0.2), [0.1, 0.12, 0.14, 0.16, 0.18, 0.2])


def test_overhead_throw_has_no_plan(model, home):
    pred = predict(BallBelief(np.array([-1.5, 0, 3.0, 3.0, 0, 0]), np.zeros((6, 6))), 1.0, 0.005, k_ad=0.0, g=0.0)
    with pytest.raises(NoCapturePlan):
        plan_capture(model, pred, home)


def test_solutions_satisfy_the_catch_constraints(model, home):
    cfg = CapturePlannerConfig()
    for pred in seeded_throws(6):
        sol = plan_capture(model, pred, home, cfg)
        report = validate_capture(model, sol, pred, cfg)
        assert report.ok
        assert sol.t_ca in np.round(time_grid(cfg.t_min, cfg.t_grid_step, pred.horizon), 12)
        assert sol.objective == capture_objective(sol.q_ca, sol.t_ca, home, cfg.weights(model), cfg.alpha)


def test_half_step_rescan_only_gains_a_grid_loss(model, home):
    # the coarse grid can miss a slightly later catch; the loss stays small
    for pred in seeded_throws(12):
        coarse = plan_capture(model, pred, home)
        fine = plan_capture(model, pred, home, CapturePlannerConfig(t_grid_step=0.01))
        assert coarse.objective - fine.objective < 0.05


def test_corrupted_configuration_is_flagged(model, home):
    pred = next(seeded_throws(1))
    sol = plan_capture(model, pred, home)
    q = sol.q_ca.copy()
    q[3] += 0.5
    report = validate_capture(model, CaptureSolution(q, sol.t_ca, sol.objective, 1), pred)
    assert report.position_error > 1e-3
    assert not report.ok


def test_height_floor_holds_with_equality(model, home):
    pose = forward_kinematics(model, home)
    catch = pose.position
    pred = throw_through(catch, -3.0 * pose.z_axis)
    sol = CaptureSolution(home.copy(), 0.6, 0.0, 1)
    report = validate_capture(model, sol, pred, CapturePlannerConfig(beta=pose.height))
    assert report.height_margin == 0.0
    assert report.height_ok


def test_heavy_base_weight_moves_the_base_less(model, home):
    for pred in seeded_throws(8):
        equal = plan_capture(model, pred, home, CapturePlannerConfig(lambda_base=1.0))
        heavy = plan_capture(model, pred, home, CapturePlannerConfig(lambda_base=50.0))
        assert abs(heavy.q_ca[1] - home[1]) <= abs(equal.q_ca[1] - home[1]) + 1e-9


def test_raising_the_height_floor_never_lowers_the_catch(model, home):
    for pred in seeded_throws(6):
        low = plan_capture(model, pred, home, CapturePlannerConfig(beta=0.5))
        high = plan_capture(model, pred, home, CapturePlannerConfig(beta=0.8))
        assert forward_kinematics(model, high.q_ca).height >= forward_kinematics(model, low.q_ca).height - 1e-9


def test_admissibility_filter_is_respected(model, home):
    pred = next(seeded_throws(1))
    best = plan_capture(model, pred, home)
    sol = plan_capture(model, pred, home, admissible=lambda q, t: abs(t - best.t_ca) > 1e-9)
    assert sol.t_ca != best.t_ca
    assert sol.objective >= best.objective


def test_config_validation():
    with pytest.raises(ValueError):
        CapturePlannerConfig(alpha=0.0)
    with pytest.raises(ValueError):
        CapturePlannerConfig(t_grid_step=0.0)
