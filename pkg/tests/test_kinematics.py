import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipfsi.errors import InvalidInputError, UnsupportedDimensionError
from slipfsi.kinematics import (
    RigidState,
    body_inertia,
    check_rotation,
    hat,
    relative_angular_velocity,
    rigid_velocity,
    rotation2d,
    rotation_about,
    step_rigid,
    transform_inertia,
    vee,
)

finite = st.floats(-50, 50, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def test_hat_examples():
    assert np.array_equal(hat(np.array([0.0, 0, 1])), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
    assert np.array_equal(hat(0.0), np.zeros((2, 2)))
    w = np.array([1.0, 2, 3])
    P = hat(w)
    for e in np.eye(3):
        assert np.allclose(P @ e, np.cross(w, e), atol=0)
    assert np.array_equal(vee(P), w)


def test_hat_rejects_other_dimensions():
    with pytest.raises(UnsupportedDimensionError):
        hat(np.ones(4))
    with pytest.raises(UnsupportedDimensionError):
        vee(np.zeros((4, 4)))


def test_vee_examples_and_errors():
    assert vee(np.zeros((3, 3))) == pytest.approx([0, 0, 0])
    assert np.array_equal(vee(hat(np.array([0.0, 0, 1]))), [0, 0, 1])
    with pytest.raises(InvalidInputError):
        vee(np.eye(3))


@given(vec3)
def test_vee_hat_roundtrip_exact(w):
    P = hat(w)
    assert np.array_equal(P + P.T, np.zeros((3, 3)))
    assert np.array_equal(vee(P), w)


@given(finite)
def test_vee_hat_roundtrip_2d(w):
    assert vee(hat(w)) == w


def test_random_skew_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(100):
        M = rng.standard_normal((3, 3))
        P = M - M.T
        assert np.max(np.abs(hat(vee(P)) - P)) <= 1e-14


def test_rigid_velocity_examples():
    s = RigidState(0.0, [0.3, -0.2], np.eye(2), [1.0, 0.0], 0.0)
    assert np.allclose(rigid_velocity(s, [[5.0, 1.0], [-2, 0]]), [[1, 0], [1, 0]])
    s = RigidState(0.0, [0.0, 0.0], np.eye(2), [0.0, 0.0], 1.0)
    assert np.allclose(rigid_velocity(s, [1.0, 0.0]), [0, 1])
    s = RigidState(0.0, [0.2, 0.1], np.eye(2), [1.0, 1.0], 2.0)
    assert np.allclose(rigid_velocity(s, [0.2, 0.6]), [0, 1])


@given(finite, finite, finite, finite, finite)
def test_rigid_velocity_has_zero_deformation(a1, a2, w, q1, q2):
    s = RigidState(0.0, [q1, q2], np.eye(2), [a1, a2], w)
    x0 = np.array([0.3, -0.7])
    h = 1e-4
    G = np.stack([(rigid_velocity(s, x0 + h * e) - rigid_velocity(s, x0 - h * e)) / (2 * h)
                  for e in np.eye(2)], axis=1)
    assert np.max(np.abs(G + G.T)) <= 1e-8 * max(1.0, abs(w))


def test_step_rigid_examples():
    s = RigidState.initial([0.1, 0.2])
    s1 = step_rigid(s, np.zeros(2), 0.0, 0.5)
    assert s1.t == 0.5 and np.array_equal(s1.q, s.q) and np.array_equal(s1.Q, s.Q)
    n = 1000
    for _ in range(n):
        s = step_rigid(s, np.zeros(2), 1.0, np.pi / n)
    assert np.max(np.abs(s.Q - rotation2d(np.pi))) <= 1e-5
    s = RigidState.initial([0.0, 0.0])
    for _ in range(10):
        s = step_rigid(s, np.array([1.0, 0.0]), 0.0, 0.1)
    assert np.max(np.abs(s.q - [1, 0])) <= 1e-12
    with pytest.raises(InvalidInputError):
        step_rigid(s, np.zeros(2), 0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(vec3, st.floats(1e-3, 0.2))
def test_step_rigid_stays_on_so3(w, dt):
    s = RigidState.initial(np.zeros(3), omega0=w)
    for _ in range(50):
        s = step_rigid(s, np.zeros(3), w, dt)
    assert np.linalg.norm(s.Q @ s.Q.T - np.eye(3)) <= 1e-10
    assert np.linalg.det(s.Q) > 0


def _disk_second_moment(radius, n):
    h = 2 * radius / n
    c = -radius + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(c, c)
    inside = X**2 + Y**2 <= radius**2
    rho = 1.0 / (np.pi * radius**2)
    return np.sum((X**2 + Y**2)[inside]) * h * h * rho


def _ball_inertia(radius, n):
    h = 2 * radius / n
    c = -radius + h * (np.arange(n) + 0.5)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    inside = X**2 + Y**2 + Z**2 <= radius**2
    rho = 1.0 / (4 / 3 * np.pi * radius**3)
    P = np.stack([X[inside], Y[inside], Z[inside]])
    r2 = np.sum(P**2, 0)
    return (np.eye(3) * r2.sum() - P @ P.T) * h**3 * rho


def test_body_inertia_against_quadrature():
    assert body_inertia(1.0).J == pytest.approx(0.5)
    assert body_inertia(0.5).J == pytest.approx(0.125)
    assert np.allclose(body_inertia(1.0, dim=3).J, 0.4 * np.eye(3))
    assert _disk_second_moment(1.0, 800) == pytest.approx(0.5, rel=2e-3)
    assert _disk_second_moment(0.5, 800) == pytest.approx(0.125, rel=2e-3)
    assert np.allclose(_ball_inertia(1.0, 120), 0.4 * np.eye(3), atol=5e-3)
    with pytest.raises(UnsupportedDimensionError):
        body_inertia(1.0, dim=4)
    with pytest.raises(InvalidInputError):
        body_inertia(-1.0)


def test_transform_inertia_examples():
    J2 = body_inertia(1.0, dim=3)
    Q = rotation_about([0, 0, 1], np.pi / 2)
    assert np.allclose(transform_inertia(J2, np.eye(3)).J, J2.J)
    assert np.allclose(transform_inertia(J2, Q).J, J2.J)
    from slipfsi.kinematics import InertiaTensor

    J1 = transform_inertia(InertiaTensor(np.diag([1.0, 2, 3])), Q)
    assert np.allclose(J1.J, np.diag([2.0, 1, 3]), atol=1e-14)
    with pytest.raises(InvalidInputError):
        transform_inertia(J2, 2 * np.eye(3))


@settings(max_examples=30, deadline=None)
@given(vec3, st.floats(-3, 3), st.lists(st.floats(0.1, 5), min_size=3, max_size=3))
def test_transform_inertia_preserves_spectrum(axis, angle, diag):
    from slipfsi.kinematics import InertiaTensor

    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([1.0, 0, 0])
    Q = rotation_about(axis, angle)
    J2 = InertiaTensor(np.diag(diag))
    J1 = transform_inertia(J2, Q)
    assert np.allclose(np.linalg.eigvalsh(J1.J), np.sort(diag), atol=1e-12)


def test_relative_angular_velocity_examples():
    Q = rotation_about([1, 2, 3], 0.4)
    P = hat(np.array([0.3, -0.1, 0.2]))
    assert np.allclose(relative_angular_velocity(Q, P, Q, P), 0, atol=1e-15)
    assert relative_angular_velocity(rotation2d(0.3), hat(1.0), rotation2d(1.1), hat(3.0)) == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        relative_angular_velocity(2 * np.eye(2), hat(1.0), np.eye(2), hat(1.0))


def test_check_rotation():
    with pytest.raises(InvalidInputError):
        check_rotation(np.diag([1.0, -1.0]))
    assert np.array_equal(check_rotation(np.eye(3)), np.eye(3))
