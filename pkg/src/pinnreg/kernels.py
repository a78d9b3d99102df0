"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_fallback`` is. Set ``PINNREG_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from dataclasses import astuple

import numpy as np

from . import _fallback

_core = None
if os.environ.get("PINNREG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _core = None

BACKEND = "compiled" if _core is not None else "python"


def available() -> list[str]:
    return ["compiled", "python"] if _core is not None else ["python"]


def _pick(backend):
    backend = backend or BACKEND
    if backend == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernels are not available")
        return _core
    if backend == "python":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


def run_closed_loop(x0, w1_0, w2_0, omega, n_steps, dt, p, hp, gains, mode, limit, backend=None):
    mod = _pick(backend)
    Wf, bf, dims = p.packed()
    if mod is _fallback:
        return _fallback.run_closed_loop(x0, w1_0, w2_0, omega, n_steps, dt, Wf, bf, dims, p.w_scale, p.omega_scale, hp, gains, mode, limit)
    hp_arr = np.asarray(astuple(hp), dtype=float)
    return _core.run_closed_loop(
        np.ascontiguousarray(x0, dtype=float), w1_0, w2_0, omega, int(n_steps), dt,
        Wf, bf, dims, p.w_scale, p.omega_scale, hp_arr, np.asarray(gains, dtype=float), int(mode), limit,
    )  # fmt: skip


def mlp_jet_point(p, x, dx, ddx, backend=None):
    mod = _pick(backend)
    Wf, bf, dims = p.packed()
    args = [np.ascontiguousarray(a, dtype=float) for a in (x, dx, ddx)]
    return mod.mlp_jet_point(Wf, bf, dims, *args)
