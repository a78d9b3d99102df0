"""Pure-Python closed-loop kernels.

Same signatures as the compiled ``_core`` module; selected by
:mod:`pinnreg.kernels` when the extension is unavailable.
"""
from __future__ import annotations

import math

import numpy as np

from . import heli
from .heli import HeliParams

MODE_WRENCH = 0
MODE_ACTUATOR = 1


def mlp_jet_point(Wflat, bflat, dims, x, dx, ddx):
    """Single-point jet through a tanh network stored as flat arrays."""
    x, dx, ddx = (np.asarray(a, dtype=float) for a in (x, dx, ddx))
    wo = bo = 0
    nl = len(dims) - 1
    for k in range(nl):
        n_in, n_out = int(dims[k]), int(dims[k + 1])
        W = Wflat[wo : wo + n_in * n_out].reshape(n_out, n_in)
        b = bflat[bo : bo + n_out]
        wo += n_in * n_out
        bo += n_out
        z = W @ np.stack([x, dx, ddx], axis=1)
        x, dx, ddx = z[:, 0] + b, z[:, 1], z[:, 2]
        if k < nl - 1:
            y = np.tanh(x)
            s = 1.0 - y * y
            x, dx, ddx = y, s * dx, s * ddx - 2.0 * y * s * dx * dx
    return x, dx, ddx


def reference(w1, w2, omega, Wflat, bflat, dims, w_scale, omega_scale):
    """Network outputs and their first/second Lie derivatives at ``w``."""
    x = (w1 / w_scale, w2 / w_scale, omega / omega_scale)
    dx = (omega * w2 / w_scale, -omega * w1 / w_scale, 0.0)
    ddx = (-omega * omega * w1 / w_scale, -omega * omega * w2 / w_scale, 0.0)
    return mlp_jet_point(Wflat, bflat, dims, x, dx, ddx)


def attitude_reference(out, l1, l2):
    """Body rate and angular acceleration that realise ``q = (0, pi_theta, pi_phi)``.

    Differentiates ``omega = E(q) q_dot`` (``E`` the inverse Euler-rate map)
    along the reference: ``alpha = E q_ddot + (dE/dt) q_dot``. The reference
    yaw is constant, so the pitch angle itself drops out.
    """
    ph = out[0]
    dph, dth = l1[0], l1[1]
    ddph, ddth = l2[0], l2[1]
    sp, cp = math.sin(ph), math.cos(ph)
    # q_dot = (0, dth, dph), columns of E ordered (psi, theta, phi)
    w_ref = np.array([dph, cp * dth, -sp * dth])
    alpha = np.array(
        [
            ddph,
            cp * ddth - sp * dph * dth,
            -sp * ddth - cp * dph * dth,
        ]
    )
    return w_ref, alpha


def control_wrench(x, w1, w2, omega, out, l1, l2, hp: HeliParams, gains, mode=MODE_WRENCH):
    """Commanded body force (gravity excluded) and torque."""
    Kr1, Kr2, Kl1, Kl2 = gains
    p, v, q, w = x[0:3], x[3:6], x[6:9], x[9:12]
    R = heli.rotation_matrix(q)
    J = np.array([hp.Jx, hp.Jy, hp.Jz])
    # body-axis order (roll, pitch, yaw) so each error drives its own torque axis
    att_err = np.array([q[2] - out[0], q[1] - out[1], q[0]])
    pos_err = np.array([p[0], p[1], p[2] - w1])
    if mode == MODE_WRENCH:
        _, alpha = attitude_reference(out, l1, l2)
        tau = J * (alpha + Kr1 * att_err + Kr2 * w) + np.cross(w, J * w)
        a_ff = np.array([0.0, 0.0, -omega * omega * w1])
        f_in = hp.M * a_ff - np.array([0.0, 0.0, hp.M * hp.g]) + Kl1 * pos_err + Kl2 * v
        return R.T @ f_in, tau
    if mode == MODE_ACTUATOR:
        from . import autodiff as ad
        from .regeq import steady_maps

        sm = steady_maps(out[0], out[1], out[2], w1, omega, hp, xp=ad, strict=False)
        f_r, tau_r = heli.rotor_wrench_terms(max(sm.c_TM, 0.0), max(sm.c_TT, 0.0), sm.c_a, out[2], hp, xp=math)
        f = np.array(f_r) + R.T @ (Kl1 * pos_err + Kl2 * v)
        tau = np.array(tau_r) + J * (Kr1 * att_err + Kr2 * w)
        return f, tau
    raise ValueError(f"unknown control mode {mode!r}")


def closed_loop_deriv(x, w1, w2, omega, Wflat, bflat, dims, w_scale, omega_scale, hp: HeliParams, gains, mode=MODE_WRENCH):
    """Closed-loop state derivative and the applied wrench (f, tau) as a 6-vector."""
    x = np.asarray(x, dtype=float)
    out, l1, l2 = reference(w1, w2, omega, Wflat, bflat, dims, w_scale, omega_scale)
    f, tau = control_wrench(x, w1, w2, omega, out, l1, l2, hp, gains, mode)
    dx = heli.rigid_body_rhs(x, f + heli.gravity_body(x[6:9], hp), tau, hp)
    return dx, np.concatenate([f, tau])


def run_closed_loop(x0, w1_0, w2_0, omega, n_steps, dt, Wflat, bflat, dims, w_scale, omega_scale, hp: HeliParams, gains, mode, limit):
    """Integrate the closed loop with RK4.

    Returns ``(X, U, n_done, diverged)``: states ``X`` (n_steps+1, 12), the
    wrench applied at the start of each step ``U`` (n_steps+1, 6), the number
    of completed steps and the divergence flag. On divergence the offending
    state is stored at index ``n_done``.
    """
    X = np.zeros((n_steps + 1, 12))
    U = np.zeros((n_steps + 1, 6))
    x = np.array(x0, dtype=float)
    X[0] = x

    def deriv(t, xs):
        c, s = math.cos(omega * t), math.sin(omega * t)
        w1 = w1_0 * c + w2_0 * s
        w2 = -w1_0 * s + w2_0 * c
        return closed_loop_deriv(xs, w1, w2, omega, Wflat, bflat, dims, w_scale, omega_scale, hp, gains, mode)

    for k in range(n_steps):
        t = k * dt
        try:
            k1, U[k] = deriv(t, x)
            h = 0.5 * dt
            k2, _ = deriv(t + h, x + h * k1)
            k3, _ = deriv(t + h, x + h * k2)
            k4, _ = deriv(t + dt, x + dt * k3)
        except (heli.GimbalLockError, FloatingPointError, ValueError):
            X[k + 1] = np.nan
            return X, U, k + 1, True
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X[k + 1] = x
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit:
            return X, U, k + 1, True
    try:
        _, U[n_steps] = deriv(n_steps * dt, x)
    except (heli.GimbalLockError, FloatingPointError, ValueError):
        pass
    return X, U, n_steps, False
