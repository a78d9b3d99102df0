"""Regulator equations for the helicopter vertical-tracking benchmark.

Everything below the exosystem helpers is written against a math
namespace ``xp`` with ``sin, cos, atan, sqrt, abs, where``: the
:mod:`autodiff` module (scalars of any AD type), ``numpy`` or ``torch``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import net
from .heli import HeliParams, rotor_wrench_terms

BC_LIMIT = 0.3491
COS_EPS = 1e-6
ANGLE_LIMIT = 0.5 * math.pi - COS_EPS


class InfeasibleError(ValueError):
    """Steady-state maps are undefined or physically impossible here."""


@dataclass(frozen=True)
class ExoConfig:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("exosystem frequency must be positive")

    @property
    def S(self) -> np.ndarray:
        return np.array([[0.0, self.omega], [-self.omega, 0.0]])


class ExoState(NamedTuple):
    w1: float
    w2: float


def exo_rhs(w, omega: float) -> np.ndarray:
    return np.array([omega * w[1], -omega * w[0]])


def exo_solution(w0, omega: float, t: float) -> ExoState:
    c, s = math.cos(omega * t), math.sin(omega * t)
    return ExoState(w0[0] * c + w0[1] * s, -w0[0] * s + w0[1] * c)


def k_of_w(w1, omega, hp: HeliParams):
    """Magnitude of the rotor force needed on the zero-error manifold.

    With ``p_z = w1`` the vertical acceleration is ``-omega**2 w1``; in the
    z-down frame the rotor must supply ``M (g + omega**2 w1)`` upward.
    """
    return hp.M * (hp.g + omega * omega * w1)


class SteadyMaps(NamedTuple):
    c_a: object
    c_TM: object
    c_TT: object
    pi_phi: object
    pi_theta: object
    c_b: object


def _safe_cos(x, xp):
    c = xp.cos(x)
    # keep the cosine a distance COS_EPS from zero, preserving its sign
    return xp.where(xp.abs(c) < COS_EPS, xp.where(c < 0, 0.0 * c - COS_EPS, 0.0 * c + COS_EPS), c)


def _relu(x, xp):
    return xp.where(x > 0, x, 0.0 * x)


def steady_maps(pi_phi, pi_theta, c_b, w1, omega, hp: HeliParams, xp=ad, strict=True) -> SteadyMaps:
    """Steady inputs ``(c_a, c_TM, c_TT)`` from the network quantities.

    ``strict`` raises :class:`InfeasibleError` on angles outside the open
    range or negative main thrust. Non-strict mode clamps cosines away from
    zero so a training loss stays finite.
    """
    if strict:
        for name, val in (("pi_phi", pi_phi), ("pi_theta", pi_theta), ("c_b", c_b)):
            if not abs(ad._value(val)) < ANGLE_LIMIT:
                raise InfeasibleError(f"{name}={ad._value(val)!r} outside (-pi/2, pi/2)")
        cphi, cth, cb = xp.cos(pi_phi), xp.cos(pi_theta), xp.cos(c_b)
    else:
        cphi, cth, cb = _safe_cos(pi_phi, xp), _safe_cos(pi_theta, xp), _safe_cos(c_b, xp)
    k = k_of_w(w1, omega, hp)
    tan_a = -(xp.sin(pi_theta) / cth) * cb / cphi
    c_a = xp.atan(tan_a)
    cos_a = 1.0 / xp.sqrt(1.0 + tan_a * tan_a)
    c_TM = cphi * cth / (cos_a * cb) * k
    c_TT = c_TM * xp.sin(c_b) + xp.sin(pi_phi) * cth * k
    if strict and (ad._value(c_TM) < 0 or ad._value(c_TT) < 0):
        raise InfeasibleError("steady thrust would be negative")
    return SteadyMaps(c_a, c_TM, c_TT, pi_phi, pi_theta, c_b)


class ResidualBreakdown(NamedTuple):
    r1: object
    r2: object
    r3: object
    bc: object
    total: object


def steady_angular_accel(pi_phi, lphi, ltheta, tau, hp: HeliParams, xp=ad):
    """Right-hand sides ``(F1, F2, F3)`` of the attitude regulator equations."""
    sphi, cphi = xp.sin(pi_phi), xp.cos(pi_phi)
    g1 = tau[0] - (hp.Jz - hp.Jy) * cphi * sphi * ltheta * ltheta
    g2 = tau[1] - (hp.Jx - hp.Jz) * sphi * lphi * ltheta
    g3 = tau[2] - (hp.Jy - hp.Jx) * cphi * lphi * ltheta
    a1, a2, a3 = g1 / hp.Jx, g2 / hp.Jy, g3 / hp.Jz
    return a1, cphi * a2 + sphi * a3, -sphi * a2 + cphi * a3


def pde_residuals(out, l1, l2, w1, omega, hp: HeliParams, xp=ad, lam: float = 0.0, strict=False) -> ResidualBreakdown:
    """Residuals of the three regulator equations plus the boundary hinge.

    ``out``, ``l1`` and ``l2`` are the network outputs
    ``(pi_phi, pi_theta, c_b)`` and their first and second Lie derivatives,
    each given as a 3-sequence (scalars or arrays). Yaw is held at zero.
    """
    pi_phi, pi_theta, c_b = out[0], out[1], out[2]
    lphi, ltheta = l1[0], l1[1]
    l2phi, l2theta = l2[0], l2[1]
    sm = steady_maps(pi_phi, pi_theta, c_b, w1, omega, hp, xp=xp, strict=strict)
    # the 1.5 power needs nonnegative thrust; the clamp only bites when infeasible
    T_M = _relu(sm.c_TM, xp)
    T_T = _relu(sm.c_TT, xp)
    _, tau = rotor_wrench_terms(T_M, T_T, sm.c_a, c_b, hp, xp=xp)
    F1, F2, F3 = steady_angular_accel(pi_phi, lphi, ltheta, tau, hp, xp=xp)
    r1 = l2phi - F1
    r2 = l2theta - F2
    r3 = ltheta * lphi - F3
    bc = _relu(xp.abs(c_b) - BC_LIMIT, xp)
    total = xp.abs(r1) + xp.abs(r2) + xp.abs(r3) + lam * bc
    return ResidualBreakdown(r1, r2, r3, bc, total)


def residuals_batch(p: net.MlpParams, w1, w2, omega, hp: HeliParams, lam: float = 0.0) -> ResidualBreakdown:
    """Numpy residuals of a network on arrays of sample points."""
    out, l1, l2 = net.lie_bundle_batch(p, w1, w2, omega)
    w1 = np.broadcast_to(np.asarray(w1, dtype=float), out.shape[:1])
    omega = np.broadcast_to(np.asarray(omega, dtype=float), out.shape[:1])
    return pde_residuals(out.T, l1.T, l2.T, w1, omega, hp, xp=np, lam=lam)


def loss(p: net.MlpParams, batch, lam: float = 0.1, hp: HeliParams | None = None):
    """Mean residual loss over ``batch`` of ``((w1, w2), omega)`` pairs.

    Returns ``(total, terms)`` where ``terms`` maps ``pde1, pde2, pde3, bc``
    to their batch means and ``total = pde1 + pde2 + pde3 + lam * bc``.
    """
    hp = hp or HeliParams()
    if len(batch) == 0:
        raise ValueError("empty batch")
    w1 = np.array([b[0][0] for b in batch], dtype=float)
    w2 = np.array([b[0][1] for b in batch], dtype=float)
    om = np.array([b[1] for b in batch], dtype=float)
    rb = residuals_batch(p, w1, w2, om, hp)
    terms = {
        "pde1": float(np.mean(np.abs(rb.r1))),
        "pde2": float(np.mean(np.abs(rb.r2))),
        "pde3": float(np.mean(np.abs(rb.r3))),
        "bc": float(np.mean(rb.bc)),
    }
    total = terms["pde1"] + terms["pde2"] + terms["pde3"] + lam * terms["bc"]
    if not math.isfinite(total):
        raise FloatingPointError("non-finite loss")
    return total, terms


def static_trim(hp: HeliParams | None = None, guess=(0.04, 0.02, 0.006)) -> np.ndarray:
    """Hover solution ``(pi_phi, pi_theta, c_b)`` of the regulator equations at ``w = 0``.

    Newton iteration with the Jacobian from forward-mode duals.
    """
    hp = hp or HeliParams()

    def F(x):
        r = pde_residuals(x, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0, 0.0, hp, xp=ad)
        return [r.r1, r.r2, r.r3]

    x = np.array(guess, dtype=float)
    for _ in range(50):
        J = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            val, d = ad.directional(F, list(x), list(e))
            J[:, j] = d
        step = np.linalg.solve(J, -np.array(val))
        x = x + step
        if np.max(np.abs(step)) < 1e-15:
            break
    return x
