import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compliant_catch.errors import InvalidConfiguration
from compliant_catch.model import (
    RobotModel,
    base_position,
    default_home,
    default_model,
    dh_transform,
    extended_jacobian,
    forward_kinematics,
    kinematics,
)
from oracles import fd_twist


def random_q(model, rng):
    return rng.uniform(model.q_min, model.q_max)


def degenerate_model(n_arm=3):
    return RobotModel(
        arm_dh=np.zeros((n_arm, 4)),
        mount=np.eye(4),
        tool=np.eye(4),
        q_min=-np.ones(2 + n_arm),
        q_max=np.ones(2 + n_arm),
        qd_max=np.ones(2 + n_arm),
        qdd_max=np.ones(2 + n_arm),
    )


def test_dh_transform_matches_rotation_product():
    # modified DH: Rot_x(alpha) Trans_x(a) Rot_z(theta) Trans_z(d)
    a, alpha, d, theta = 0.3, 0.7, -0.2, 1.1

    def rx(t):
        return np.array([[1, 0, 0, 0], [0, math.cos(t), -math.sin(t), 0], [0, math.sin(t), math.cos(t), 0], [0, 0, 0, 1]])

    def rz(t):
        return np.array([[math.cos(t), -math.sin(t), 0, 0], [math.sin(t), math.cos(t), 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])

    def tr(x, z):
        T = np.eye(4)
        T[0, 3], T[2, 3] = x, z
        return T

    expected = rx(alpha) @ tr(a, 0) @ rz(theta) @ tr(0, d)
    assert np.allclose(dh_transform(a, alpha, d, theta), expected, atol=1e-15)


def test_degenerate_chain_has_zero_translational_arm_columns():
    m = degenerate_model()
    J = extended_jacobian(m, np.array([0.3, 0.2, 0.1, -0.4, 0.5]))
    assert np.allclose(J[:3, 2:], 0.0, atol=1e-9)


def test_base_translation_column_at_zero_heading(model):
    q = default_home().copy()
    J = extended_jacobian(model, q)
    assert np.allclose(J[:, 1], [1, 0, 0, 0, 0, 0], atol=1e-6)


def test_base_is_placed_on_the_polar_chart():
    assert np.allclose(base_position([math.pi / 2, 2.0] + [0] * 7), [0.0, 2.0], atol=1e-15)
    assert np.allclose(base_position([math.pi, 1.0] + [0] * 7), [-1.0, 0.0], atol=1e-15)


def test_jacobian_matches_finite_difference_twist(model, rng):
    fk = lambda q: forward_kinematics(model, q).matrix
    for _ in range(25):
        q = random_q(model, rng)
        qd = rng.normal(size=model.n)
        qd /= np.linalg.norm(qd)
        twist = fd_twist(fk, q, qd)
        assert np.linalg.norm(extended_jacobian(model, q) @ qd - twist) < 1e-4
        assert np.linalg.norm(kinematics(model, q)[1] @ qd - twist) < 1e-4


def test_analytic_and_numeric_jacobians_agree(model, rng):
    for _ in range(10):
        q = random_q(model, rng)
        pose, J = kinematics(model, q)
        assert np.allclose(J, extended_jacobian(model, q), atol=1e-7)
        assert np.allclose(pose.matrix, forward_kinematics(model, q).matrix, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9))
def test_rotation_stays_orthonormal(unit):
    m = default_model()
    q = m.q_min + (np.array(unit) + 1) / 2 * (m.q_max - m.q_min)
    R = forward_kinematics(m, q).rotation
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_forward_kinematics_is_deterministic(model, rng):
    q = random_q(model, rng)
    a = forward_kinematics(model, q).matrix
    b = forward_kinematics(model, q.copy()).matrix
    assert np.array_equal(a, b)


def test_heading_rotates_the_whole_robot(model):
    q = default_home().copy()
    p0 = forward_kinematics(model, q).position
    q[0] = 0.5
    p1 = forward_kinematics(model, q).position
    c, s = math.cos(0.5), math.sin(0.5)
    assert np.allclose(p1, [c * p0[0] - s * p0[1], s * p0[0] + c * p0[1], p0[2]], atol=1e-12)


def test_bad_configurations_are_rejected(model):
    with pytest.raises(InvalidConfiguration):
        forward_kinematics(model, np.zeros(5))
    with pytest.raises(InvalidConfiguration):
        forward_kinematics(model, np.full(9, np.nan))


def test_bad_models_are_rejected():
    with pytest.raises(InvalidConfiguration):
        RobotModel(np.zeros((2, 3)), np.eye(4), np.eye(4), -np.ones(4), np.ones(4), np.ones(4), np.ones(4))
    with pytest.raises(InvalidConfiguration):
        RobotModel(np.zeros((2, 4)), np.eye(4), np.eye(4), np.ones(4), np.ones(4), np.ones(4), np.ones(4))
    with pytest.raises(InvalidConfiguration):
        RobotModel(np.zeros((2, 4)), np.eye(4), np.eye(4), -np.ones(4), np.ones(4), np.zeros(4), np.ones(4))


def test_home_is_within_limits_and_faces_up(model):
    home = default_home()
    assert model.within_limits(home)
    pose = forward_kinematics(model, home)
    assert pose.height > 0.5
    assert pose.z_axis[2] > 0.5
