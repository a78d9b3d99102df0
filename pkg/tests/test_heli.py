import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinnreg import heli, regeq
from pinnreg.autodiff import DomainError
from pinnreg.heli import ControlInputs, HeliParams, RigidState

HP = HeliParams()
LITERAL = HeliParams(drag_sign=-1.0)

angles = st.tuples(st.floats(-3.1, 3.1), st.floats(-1.5, 1.5), st.floats(-3.1, 3.1))


def test_table_defaults():
    assert (HP.M, HP.g, HP.Jx, HP.Jy, HP.Jz) == (4.9, 9.8, 0.14241, 0.27121, 0.2714)
    assert (HP.l_M, HP.y_M, HP.h_M, HP.h_T, HP.l_T) == (-0.015, 0.0, 0.2943, 0.1154, 0.8715)
    assert (HP.cQ_M, HP.DQ_M, HP.cQ_T, HP.DQ_T, HP.cM_b, HP.cM_a) == (0.00445, 0.6304, 0.00506, 0.00848, 25.23, 25.23)


def test_params_validation():
    with pytest.raises(ValueError):
        HeliParams(M=0.0)
    with pytest.raises(ValueError):
        HeliParams(Jy=-1.0)
    with pytest.raises(ValueError):
        HeliParams.from_dict({"mass": 3.0})
    assert HeliParams.from_dict(HP.to_dict()) == HP


# --- kinematics -------------------------------------------------------------

def test_rotation_identity():
    assert np.array_equal(heli.rotation_matrix((0.0, 0.0, 0.0)), np.eye(3))


@given(angles)
@settings(max_examples=50, deadline=None)
def test_rotation_is_proper(q):
    R = heli.rotation_matrix(q)
    assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-12
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@given(angles.filter(lambda q: abs(q[1]) < 1.4), st.tuples(*[st.floats(-2, 2)] * 3))
@settings(max_examples=40, deadline=None)
def test_kinematic_consistency(q, w):
    # d/dt R(q(t)) with q' = D(q) w must equal R skew(w)
    q, w = np.array(q), np.array(w)
    h = 1e-6
    qd = heli.euler_rate_matrix(q) @ w
    dR = (heli.rotation_matrix(q + h * qd) - heli.rotation_matrix(q - h * qd)) / (2 * h)
    assert np.max(np.abs(dR - heli.rotation_matrix(q) @ heli.skew(w))) <= 1e-6


def test_euler_rate_identity_and_inverse():
    D0 = heli.euler_rate_matrix((0.0, 0.0, 0.0))
    # rows (psi, theta, phi) pick (r, q, p) at zero attitude; identity in roll-pitch-yaw row order
    assert np.array_equal(D0[::-1], np.eye(3))
    q = (0.3, -0.4, 1.1)
    np.testing.assert_allclose(heli.euler_rate_matrix(q) @ heli.euler_rate_matrix_inv(q), np.eye(3), atol=1e-14)


def test_gimbal_lock_guard():
    with pytest.raises(heli.GimbalLockError):
        heli.euler_rate_matrix((0.0, math.pi / 2 - 1e-7, 0.0))
    heli.euler_rate_matrix((0.0, math.pi / 2 - 1e-5, 0.0))


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])  # fmt: skip


def quat_to_matrix(qt):
    w, x, y, z = qt / np.linalg.norm(qt)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])  # fmt: skip


def test_euler_rates_vs_quaternion_oracle():
    q0 = np.array([0.2, -0.3, 0.4])
    omega_b = lambda t: np.array([0.5 * math.cos(t), -0.3 + 0.2 * t, 0.7 * math.sin(2 * t)])  # noqa: E731
    # independent reference: quaternion q' = q (x) (0, w) / 2 from the matrix at t=0
    R0 = heli.rotation_matrix(q0)
    tr = np.trace(R0)
    w = math.sqrt(1 + tr) / 2
    quat = np.array([w, (R0[2, 1] - R0[1, 2]) / (4 * w), (R0[0, 2] - R0[2, 0]) / (4 * w), (R0[1, 0] - R0[0, 1]) / (4 * w)])
    qrhs = lambda t, z: 0.5 * quat_mul(z, np.concatenate([[0.0], omega_b(t)]))  # noqa: E731
    erhs = lambda t, z: heli.euler_rate_matrix(z) @ omega_b(t)  # noqa: E731
    dt = 1e-3
    q = q0.copy()
    for k in range(1000):
        quat = heli.rk4_step(qrhs, quat, k * dt, dt)
        q = heli.rk4_step(erhs, q, k * dt, dt)
    E = heli.rotation_matrix(q).T @ quat_to_matrix(quat)
    angle = math.acos(min(1.0, (np.trace(E) - 1) / 2))
    assert angle <= 1e-5


# --- rotor wrench -----------------------------------------------------------

def printed_wrench(T_M, T_T, a, b, hp, sign):
    """Second implementation, transcribed term by term from the rotor equations."""
    X_M = -T_M * math.sin(a)
    Y_M = T_M * math.sin(b)
    Z_M = -T_M * math.cos(a) * math.cos(b)
    Y_T = -T_T
    Q_M = hp.cQ_M * T_M**1.5 + sign * hp.DQ_M
    Q_T = hp.cQ_T * T_T**1.5 + sign * hp.DQ_T
    R_M = hp.cM_b * b - Q_M * math.sin(a)
    M_M = hp.cM_a * a + Q_M * math.sin(b)
    N_M = -Q_M * math.cos(a) * math.cos(b)
    M_T = -Q_T
    t1 = Y_M * hp.h_M + Z_M * hp.y_M + Y_T * hp.h_T
    t2 = -X_M * hp.h_M + Z_M * hp.l_M
    t3 = -Y_M * hp.l_M - Y_T * hp.l_T
    return np.array([X_M, Y_M + Y_T, Z_M]), np.array([R_M + t1, M_M + M_T + t2, N_M + t3])


def test_zero_input_wrench_literal_sign():
    f, tau = heli.rotor_wrench(ControlInputs(0.0, 0.0, 0.0, 0.0), LITERAL)
    assert np.array_equal(f, np.zeros(3))
    np.testing.assert_allclose(tau, (0.0, 0.00848, 0.6304), atol=1e-15)


def test_zero_input_wrench_default_sign():
    f, tau = heli.rotor_wrench(ControlInputs(0.0, 0.0, 0.0, 0.0), HP)
    assert np.array_equal(f, np.zeros(3))
    np.testing.assert_allclose(tau, (0.0, -0.00848, -0.6304), atol=1e-15)


def test_pure_vertical_thrust():
    f, _ = heli.rotor_wrench(ControlInputs(37.0, 0.0, 0.0, 0.0), HP)
    np.testing.assert_array_equal(f, (0.0, 0.0, -37.0))


@pytest.mark.parametrize("hp,sign", [(HP, 1.0), (LITERAL, -1.0)])
def test_wrench_matches_transcription(rng, hp, sign):
    for _ in range(100):
        T_M, T_T = rng.uniform(0, 80), rng.uniform(0, 10)
        a, b = rng.uniform(-0.4, 0.4, 2)
        f, tau = heli.rotor_wrench(ControlInputs(T_M, T_T, a, b), hp)
        f2, tau2 = printed_wrench(T_M, T_T, a, b, hp, sign)
        np.testing.assert_allclose(f, f2, rtol=1e-15, atol=1e-15)
        np.testing.assert_allclose(tau, tau2, rtol=1e-14, atol=1e-14)


def test_negative_thrust_rejected():
    with pytest.raises(DomainError):
        heli.rotor_wrench(ControlInputs(-1.0, 0.0, 0.0, 0.0), HP)
    with pytest.raises(DomainError):
        heli.rotor_wrench(ControlInputs(1.0, -1e-3, 0.0, 0.0), HP)


def test_wrench_continuous_at_zero_thrust():
    _, t0 = heli.rotor_wrench(ControlInputs(0.0, 0.0, 0.1, 0.1), HP)
    _, t1 = heli.rotor_wrench(ControlInputs(1e-14, 1e-14, 0.1, 0.1), HP)
    assert np.max(np.abs(t1 - t0)) < 1e-12


# --- dynamics ---------------------------------------------------------------

def test_free_fall():
    xd = heli.dynamics(RigidState.zero(), ControlInputs(0.0, 0.0, 0.0, 0.0), HP)
    np.testing.assert_allclose(xd[heli.V], (0.0, 0.0, HP.g), atol=1e-15)


def hover_balance(z, hp):
    """Six static equations in (T_M, T_T, a, b, phi, theta): zero force and torque."""
    T_M, T_T, a, b, phi, th = z
    q = np.array([0.0, th, phi])
    f, tau = heli.rotor_wrench(ControlInputs(T_M, T_T, a, b), hp)
    return np.concatenate([f + heli.gravity_body(q, hp), tau])


def solve_hover(hp):
    z = np.array([hp.M * hp.g, 1.0, 0.0, 0.0, 0.0, 0.0])
    for _ in range(60):
        F = hover_balance(z, hp)
        J = np.empty((6, 6))
        for j in range(6):
            e = np.zeros(6)
            e[j] = 1e-7
            J[:, j] = (hover_balance(z + e, hp) - hover_balance(z - e, hp)) / 2e-7
        z = z - np.linalg.solve(J, F)
        if np.max(np.abs(F)) < 1e-13:
            break
    return z


def test_hover_fixed_point_and_trim_values():
    T_M, T_T, a, b, phi, th = solve_hover(HP)
    x = RigidState(np.zeros(3), np.zeros(3), np.array([0.0, th, phi]), np.zeros(3))
    xd = heli.dynamics(x, ControlInputs(T_M, T_T, a, b), HP)
    assert np.linalg.norm(xd[heli.V]) <= 1e-6
    assert np.linalg.norm(xd[heli.W]) <= 1e-6
    assert np.linalg.norm(xd[heli.Q]) == 0.0
    # published trim (0.044, 0.018, 0.0061), three significant digits
    assert abs(phi - 0.044) < 5e-4 and abs(th - 0.018) < 5e-4 and abs(b - 0.0061) < 5e-5
    # the regulator equations at w = 0 reproduce the same static solution
    np.testing.assert_allclose(regeq.static_trim(HP), (phi, th, b), atol=1e-9)


def test_hover_with_literal_torque_sign_misses_published_trim():
    _, _, _, b, phi, th = solve_hover(LITERAL)
    assert abs(phi - 0.044) > 0.02


def test_torque_free_rotation_conserves_energy_and_momentum():
    J = np.diag(HP.J)
    x = np.zeros(12)
    x[heli.W] = (0.8, -0.5, 1.2)
    x[heli.Q] = (0.1, 0.2, -0.3)
    zero = np.zeros(3)
    gravity_free = lambda t, s: heli.rigid_body_rhs(s, zero, zero, HP)  # noqa: E731
    E0 = 0.5 * x[heli.W] @ (J * x[heli.W])
    H0 = np.linalg.norm(J * x[heli.W])
    for k in range(100):
        x = heli.rk4_step(gravity_free, x, k * 0.01, 0.01)
    w = x[heli.W]
    assert abs(0.5 * w @ (J * w) - E0) / E0 <= 1e-8
    assert abs(np.linalg.norm(J * w) - H0) / H0 <= 1e-8


# --- rk4 --------------------------------------------------------------------

def exo_error(dt, T=30.0, om=1.0):
    S = np.array([[0.0, om], [-om, 0.0]])
    w = np.array([1.0, 0.5])
    w0 = w.copy()
    n = int(round(T / dt))
    err = 0.0
    for k in range(n):
        w = heli.rk4_step(lambda t, z: S @ z, w, k * dt, dt)
        err = max(err, float(np.max(np.abs(w - np.array(regeq.exo_solution(w0, om, (k + 1) * dt))))))
    return err


def test_rk4_exosystem_accuracy():
    assert exo_error(0.01) <= 1e-6


def test_rk4_convergence_order():
    e1, e2 = exo_error(0.04, T=10.0), exo_error(0.02, T=10.0)
    assert math.log2(e1 / e2) >= 3.8


def test_rk4_zero_dynamics_and_errors():
    x = np.array([1.0, -2.0])
    assert np.array_equal(heli.rk4_step(lambda t, z: np.zeros(2), x, 0.0, 0.1), x)
    with pytest.raises(ValueError):
        heli.rk4_step(lambda t, z: z, x, 0.0, 0.0)
    with pytest.raises(heli.DivergenceError):
        heli.rk4_step(lambda t, z: np.full(2, np.inf), x, 0.0, 0.1)


def test_rk4_evaluates_stage_times():
    seen = []
    heli.rk4_step(lambda t, z: seen.append(t) or np.zeros(1), np.zeros(1), 1.0, 0.2)
    assert seen == [1.0, 1.1, 1.1, 1.2]
