"""Rigid-body helicopter model.

State vectors are flat float arrays of length 12::

    [p (3, inertial, z down), v (3, inertial), q = (psi, theta, phi), omega_b (3)]

The rotation uses the Z-Y-X convention ``R = Rz(psi) Ry(theta) Rx(phi)``,
which is the convention whose Euler-rate map is the matrix ``D(q)`` below.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from . import autodiff as ad

P, V, Q, W = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)
GIMBAL_EPS = 1e-6


class GimbalLockError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class HeliParams:
    """Physical constants. Defaults are the benchmark helicopter.

    ``drag_sign`` is the sign in front of the rotor drag offsets in
    ``Q = c T**1.5 + drag_sign * D``. The benchmark hover trim
    (0.044, 0.018, 0.0061) is reproduced with ``+1``; ``-1`` gives the
    variant with the offsets subtracted.
    """

    M: float = 4.9
    g: float = 9.8
    Jx: float = 0.14241
    Jy: float = 0.27121
    Jz: float = 0.2714
    l_M: float = -0.015
    y_M: float = 0.0
    h_M: float = 0.2943
    h_T: float = 0.1154
    l_T: float = 0.8715
    cQ_M: float = 0.00445
    DQ_M: float = 0.6304
    cQ_T: float = 0.00506
    DQ_T: float = 0.00848
    cM_b: float = 25.23
    cM_a: float = 25.23
    drag_sign: float = 1.0

    def __post_init__(self):
        if self.M <= 0 or min(self.Jx, self.Jy, self.Jz) <= 0:
            raise ValueError("mass and inertias must be positive")
        if self.drag_sign not in (1.0, -1.0):
            raise ValueError("drag_sign must be +1 or -1")

    @property
    def J(self) -> np.ndarray:
        return np.diag([self.Jx, self.Jy, self.Jz])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HeliParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown heli parameter(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class RigidState:
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    omega_b: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q, self.omega_b]).astype(float)

    @classmethod
    def from_array(cls, x) -> "RigidState":
        x = np.asarray(x, dtype=float)
        return cls(x[P].copy(), x[V].copy(), x[Q].copy(), x[W].copy())

    @classmethod
    def zero(cls) -> "RigidState":
        return cls.from_array(np.zeros(12))


@dataclass(frozen=True)
class ControlInputs:
    T_M: float
    T_T: float
    a: float
    b: float


def rotation_matrix(q) -> np.ndarray:
    """Body-to-inertial rotation for ``q = (psi, theta, phi)``."""
    psi, th, ph = q
    cs, ss = math.cos(psi), math.sin(psi)
    ct, st = math.cos(th), math.sin(th)
    cp, sp = math.cos(ph), math.sin(ph)
    return np.array(
        [
            [cs * ct, cs * st * sp - ss * cp, cs * st * cp + ss * sp],
            [ss * ct, ss * st * sp + cs * cp, ss * st * cp - cs * sp],
            [-st, ct * sp, ct * cp],
        ]
    )


def euler_rate_matrix(q) -> np.ndarray:
    """Map ``omega_b -> q_dot`` with rows ordered (psi, theta, phi).

    Raises :class:`GimbalLockError` within ``GIMBAL_EPS`` of ``|theta| = pi/2``.
    """
    _, th, ph = q
    if abs(th) >= 0.5 * math.pi - GIMBAL_EPS:
        raise GimbalLockError(f"pitch {th!r} too close to +-pi/2")
    ct, tt = math.cos(th), math.tan(th)
    cp, sp = math.cos(ph), math.sin(ph)
    return np.array(
        [
            [0.0, sp / ct, cp / ct],
            [0.0, cp, -sp],
            [1.0, sp * tt, cp * tt],
        ]
    )


def euler_rate_matrix_inv(q) -> np.ndarray:
    """Inverse of :func:`euler_rate_matrix`: ``q_dot -> omega_b``."""
    _, th, ph = q
    ct, st = math.cos(th), math.sin(th)
    cp, sp = math.cos(ph), math.sin(ph)
    return np.array(
        [
            [-st, 0.0, 1.0],
            [ct * sp, cp, 0.0],
            [ct * cp, -sp, 0.0],
        ]
    )


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rotor_wrench_terms(T_M, T_T, a, b, hp: HeliParams, xp=ad):
    """Rotor force and torque in body axes.

    Written against a math namespace ``xp`` (``autodiff``, ``numpy`` or
    ``torch``) so the same formulas serve simulation, training and the
    derivative checks. Returns two 3-tuples.
    """
    sa, ca = xp.sin(a), xp.cos(a)
    sb, cb = xp.sin(b), xp.cos(b)
    X_M = -T_M * sa
    Y_M = T_M * sb
    Z_M = -T_M * ca * cb
    Y_T = -T_T
    Q_M = hp.cQ_M * T_M ** 1.5 + hp.drag_sign * hp.DQ_M
    Q_T = hp.cQ_T * T_T ** 1.5 + hp.drag_sign * hp.DQ_T
    R_M = hp.cM_b * b - Q_M * sa
    M_M = hp.cM_a * a + Q_M * sb
    N_M = -Q_M * ca * cb
    M_T = -Q_T
    tf1 = Y_M * hp.h_M + Z_M * hp.y_M + Y_T * hp.h_T
    tf2 = -X_M * hp.h_M + Z_M * hp.l_M
    tf3 = -Y_M * hp.l_M - Y_T * hp.l_T
    return (X_M, Y_M + Y_T, Z_M), (R_M + tf1, M_M + M_T + tf2, N_M + tf3)


def rotor_wrench(u: ControlInputs, hp: HeliParams | None = None):
    """Body force and torque produced by the rotors for inputs ``u``."""
    hp = hp or HeliParams()
    if u.T_M < 0 or u.T_T < 0:
        raise ad.DomainError("thrust", min(u.T_M, u.T_T))
    f, tau = rotor_wrench_terms(u.T_M, u.T_T, u.a, u.b, hp, xp=math)
    return np.array(f), np.array(tau)


def rigid_body_rhs(x, f_b, tau_b, hp: HeliParams) -> np.ndarray:
    """Newton-Euler right-hand side for a total body force/torque (gravity included in ``f_b``)."""
    x = np.asarray(x, dtype=float)
    q, w = x[Q], x[W]
    R = rotation_matrix(q)
    J = np.array([hp.Jx, hp.Jy, hp.Jz])
    dx = np.empty(12)
    dx[P] = x[V]
    dx[V] = R @ np.asarray(f_b) / hp.M
    dx[Q] = euler_rate_matrix(q) @ w
    dx[W] = (np.asarray(tau_b) - np.cross(w, J * w)) / J
    return dx


def gravity_body(q, hp: HeliParams) -> np.ndarray:
    return rotation_matrix(q).T @ np.array([0.0, 0.0, hp.M * hp.g])


def dynamics(x, u: ControlInputs, hp: HeliParams | None = None) -> np.ndarray:
    """State derivative under rotor inputs ``u`` and gravity."""
    hp = hp or HeliParams()
    x = x.to_array() if isinstance(x, RigidState) else np.asarray(x, dtype=float)
    f_r, tau = rotor_wrench(u, hp)
    return rigid_body_rhs(x, f_r + gravity_body(x[Q], hp), tau, hp)


def rk4_step(rhs: Callable, x, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = rhs(t, x)``.

    Raises :class:`DivergenceError` if the new state is not finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = rhs(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state at t={t + dt}")
    return out
