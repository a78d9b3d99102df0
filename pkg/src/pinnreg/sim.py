"""Closed-loop validation of a trained regulator network."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass
from typing import NamedTuple

import numpy as np

from . import heli, kernels, net, regeq
from ._fallback import MODE_ACTUATOR, MODE_WRENCH, attitude_reference, control_wrench
from .heli import HeliParams, RigidState

DIVERGENCE_LIMIT = 1e4
MODES = {"wrench": MODE_WRENCH, "actuator": MODE_ACTUATOR}

GRID_HEADER = ("w1_0", "omega", "mean_abs_ez", "diverged", "seen_in_training")
TRAJ_HEADER = (
    "t", "w1_ref", "e_z",
    "p1", "p2", "p3", "v1", "v2", "v3",
    "psi", "theta", "phi", "omega1", "omega2", "omega3",
    "f1", "f2", "f3", "tau1", "tau2", "tau3",
)  # fmt: skip


@dataclass(frozen=True)
class Gains:
    Kr1: float = -2.0
    Kr2: float = -0.1
    Kl1: float = -20.0
    Kl2: float = -0.01

    def as_tuple(self):
        return astuple(self)


@dataclass
class SimResult:
    t: np.ndarray
    w1_ref: np.ndarray
    e_z: np.ndarray
    states: np.ndarray  # (n, 12)
    inputs: np.ndarray  # (n, 6): commanded body force (gravity excluded) and torque
    mean_abs_ez: float
    max_abs_ez: float
    diverged: bool
    diverge_time: float | None


def _mode(mode) -> int:
    if isinstance(mode, str):
        try:
            return MODES[mode]
        except KeyError:
            raise ValueError(f"unknown control mode {mode!r}") from None
    return int(mode)


def init_on_manifold(w0, omega: float, p: net.MlpParams) -> RigidState:
    """Plant state on the learned zero-error manifold at exosystem state ``w0``."""
    lb = net.lie_bundle(p, w0[0], w0[1], omega)
    q = np.array([0.0, lb.out.pi_theta, lb.out.pi_phi])
    if abs(q[1]) >= 0.5 * math.pi - heli.GIMBAL_EPS:
        raise heli.GimbalLockError("network pitch too close to +-pi/2")
    w_ref, _ = attitude_reference(lb.out, lb.l1, lb.l2)
    return RigidState(
        p=np.array([0.0, 0.0, float(w0[0])]),
        v=np.array([0.0, 0.0, omega * float(w0[1])]),
        q=q,
        omega_b=w_ref,
    )


def control(x, w, omega: float, p: net.MlpParams, gains: Gains | None = None, hp: HeliParams | None = None, mode="wrench"):
    """Commanded body force (gravity excluded) and body torque."""
    gains = gains or Gains()
    hp = hp or HeliParams()
    x = x.to_array() if isinstance(x, RigidState) else np.asarray(x, dtype=float)
    lb = net.lie_bundle(p, w[0], w[1], omega)
    return control_wrench(x, w[0], w[1], omega, lb.out, lb.l1, lb.l2, hp, gains.as_tuple(), _mode(mode))


def simulate(
    w0,
    omega: float,
    T: float,
    dt: float,
    p: net.MlpParams,
    gains: Gains | None = None,
    hp: HeliParams | None = None,
    mode="wrench",
    backend: str | None = None,
) -> SimResult:
    """Roll out the closed loop from the manifold for ``T`` seconds.

    The exosystem uses its closed form; the plant is integrated with RK4 and
    the controller is evaluated at every stage. A state entry above
    ``DIVERGENCE_LIMIT`` (or non-finite, or gimbal lock) ends the run and
    sets ``diverged``.
    """
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    gains = gains or Gains()
    hp = hp or HeliParams()
    n_steps = int(round(T / dt))
    try:
        x0 = init_on_manifold(w0, omega, p).to_array()
    except heli.GimbalLockError:
        z = np.zeros((1, 12))
        return SimResult(np.zeros(1), np.array([w0[0]]), np.zeros(1), z, np.zeros((1, 6)), math.nan, math.nan, True, 0.0)
    X, U, n_done, diverged = kernels.run_closed_loop(
        x0, float(w0[0]), float(w0[1]), float(omega), n_steps, float(dt),
        p, hp, gains.as_tuple(), _mode(mode), DIVERGENCE_LIMIT, backend=backend,
    )  # fmt: skip
    t = dt * np.arange(n_done + 1)
    w1_ref = w0[0] * np.cos(omega * t) + w0[1] * np.sin(omega * t)
    X, U = X[: n_done + 1], U[: n_done + 1]
    e_z = X[:, 2] - w1_ref
    if diverged:
        # the last stored state is the one that tripped the check
        ok = e_z[:-1] if n_done > 0 else e_z[:1]
    else:
        ok = e_z
    return SimResult(
        t=t,
        w1_ref=w1_ref,
        e_z=e_z,
        states=X,
        inputs=U,
        mean_abs_ez=float(np.mean(np.abs(ok))),
        max_abs_ez=float(np.max(np.abs(ok))),
        diverged=bool(diverged),
        diverge_time=float(t[-1]) if diverged else None,
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(res: SimResult, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRAJ_HEADER)
        for k in range(res.t.size):
            wr.writerow([_fmt(res.t[k]), _fmt(res.w1_ref[k]), _fmt(res.e_z[k]), *map(_fmt, res.states[k]), *map(_fmt, res.inputs[k])])


# ---------------------------------------------------------------------------
# grid experiments
# ---------------------------------------------------------------------------

class GridRow(NamedTuple):
    w1_0: float
    omega: float
    mean_abs_ez: float
    diverged: bool
    seen_in_training: bool


def _member(x: float, values, tol: float = 1e-9) -> bool:
    return any(abs(x - v) <= tol for v in values)


def _grid_cell(args):
    w1_0, omega, T, dt, model_json, gains, hp, mode, seen = args
    p = net.from_json(model_json)
    res = simulate((w1_0, 0.0), omega, T, dt, p, gains, hp, mode)
    mean = res.mean_abs_ez if not res.diverged else math.nan
    return GridRow(w1_0, omega, mean, res.diverged, seen)


def grid_experiment(
    w1_list,
    omega_list,
    T: float,
    p: net.MlpParams,
    gains: Gains | None = None,
    hp: HeliParams | None = None,
    dt: float = 0.01,
    train_radii=(),
    train_omegas=(),
    mode="wrench",
    workers: int = 1,
) -> list[GridRow]:
    """One closed-loop run per ``(w1_0, omega)``; rows ordered omega-major, then w1_0.

    ``mean_abs_ez`` is NaN for diverged cells. A cell is ``seen_in_training``
    when its amplitude is a training radius and its frequency a training
    frequency.
    """
    if len(w1_list) == 0 or len(omega_list) == 0:
        raise ValueError("empty grid")
    gains = gains or Gains()
    hp = hp or HeliParams()
    model_json = net.to_json(p)
    jobs = []
    for om in omega_list:
        for w1 in w1_list:
            seen = _member(abs(w1), train_radii) and _member(om, train_omegas)
            jobs.append((float(w1), float(om), T, dt, model_json, gains, hp, mode, seen))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_grid_cell, jobs))
    return [_grid_cell(j) for j in jobs]


def write_grid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(GRID_HEADER)
        for r in rows:
            wr.writerow([_fmt(r.w1_0), _fmt(r.omega), _fmt(r.mean_abs_ez), int(r.diverged), int(r.seen_in_training)])


def read_grid_csv(path) -> list[GridRow]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd, ()))
        if header != GRID_HEADER:
            raise ValueError(f"{path}: unexpected header {','.join(header)!r}")
        rows = []
        for line_no, rec in enumerate(rd, start=2):
            if len(rec) != len(GRID_HEADER):
                raise ValueError(f"{path}:{line_no}: expected {len(GRID_HEADER)} columns")
            rows.append(GridRow(float(rec[0]), float(rec[1]), float(rec[2]), rec[3] == "1", rec[4] == "1"))
    return rows


class ErrorStats(NamedTuple):
    mean: float
    median: float
    counts: np.ndarray
    edges: np.ndarray
    n_ok: int
    n_diverged: int


class EmptyStatisticsError(ValueError):
    pass


def error_stats(rows, bins: int = 20) -> ErrorStats:
    """Mean, median and histogram of the per-cell error over non-diverged cells."""
    rows = list(rows)
    if not rows:
        raise EmptyStatisticsError("empty grid table")
    vals = np.array([r.mean_abs_ez for r in rows if not r.diverged], dtype=float)
    n_div = sum(1 for r in rows if r.diverged)
    if vals.size == 0:
        raise EmptyStatisticsError("every cell diverged")
    counts, edges = np.histogram(vals, bins=bins)
    return ErrorStats(float(np.mean(vals)), float(np.median(vals)), counts, edges, int(vals.size), n_div)


def oracle_manifold_params(hp: HeliParams | None = None) -> net.MlpParams:
    """Constant network equal to the exact hover trim (valid at ``w = 0`` and ``omega = 0``)."""
    hp = hp or HeliParams()
    trim = regeq.static_trim(hp)
    p = net.zeros((3, 1, 3))
    Ws = [np.zeros((1, 3)), np.zeros((3, 1))]
    bs = [np.zeros(1), trim.astype(float)]
    return p.replace(Ws, bs)

