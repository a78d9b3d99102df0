"""Training set construction, the optimisation loop and the loss landscape.

Parameter gradients come from torch's reverse mode. The Lie derivatives
inside the loss are pushed through the network with :class:`autodiff.Jet`
on torch tensors, so they remain exact and differentiable.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import torch

from . import net, regeq
from .heli import HeliParams

log = logging.getLogger(__name__)

DTYPE = torch.float64
DEFAULT_RADII = tuple(0.5 * i for i in range(13))
DEFAULT_OMEGAS = (0.25, 0.5, 0.75, 1.0)


@dataclass
class TrainConfig:
    radii: tuple = DEFAULT_RADII
    omega_set: tuple = DEFAULT_OMEGAS
    lr_init: float = 1e-3
    lr_final: float = 1e-6
    epochs: int = 100
    lam: float = 0.1
    batch_size: int = 64
    seed: int = 0
    target_samples: int = 24499
    layer_dims: tuple = net.DEFAULT_DIMS
    optimizer: str = "adam"
    output_gain: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    heli: HeliParams = field(default_factory=HeliParams)

    def __post_init__(self):
        self.radii = tuple(float(r) for r in self.radii)
        self.omega_set = tuple(float(o) for o in self.omega_set)
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if not self.lr_final < self.lr_init:
            raise ValueError("lr_final must be below lr_init")
        if any(r < 0 for r in self.radii) or list(self.radii) != sorted(self.radii):
            raise ValueError("radii must be nonnegative and ascending")
        if not self.omega_set or any(o <= 0 for o in self.omega_set):
            raise ValueError("omega_set must be nonempty and positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lr_at(self, epoch: int) -> float:
        """Geometric decay from ``lr_init`` (first epoch) to ``lr_final`` (last)."""
        if self.epochs == 1:
            return self.lr_init
        frac = epoch / (self.epochs - 1)
        return self.lr_init * (self.lr_final / self.lr_init) ** frac


class SamplePoint(NamedTuple):
    w: regeq.ExoState
    omega: float


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _circle_counts(radii, kappa: float) -> list[int]:
    return [max(1, _round_half_up(kappa * r)) for r in radii]


def angular_density(cfg: TrainConfig) -> float:
    """Points per unit radius so the total lands closest to ``target_samples``."""
    per_omega = cfg.target_samples / len(cfg.omega_set)

    def total(k):
        return sum(_circle_counts(cfg.radii, k))

    if max(cfg.radii) == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while total(hi) < per_omega:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < per_omega:
            lo = mid
        else:
            hi = mid
    # hi is the smallest density reaching the target; lo the largest below it
    return hi if abs(total(hi) - per_omega) <= abs(total(lo) - per_omega) else lo


def sample_arrays(cfg: TrainConfig):
    """Polar training set as arrays ``(w1, w2, omega)``."""
    kappa = angular_density(cfg)
    w1s, w2s = [], []
    for r, n in zip(cfg.radii, _circle_counts(cfg.radii, kappa)):
        if r == 0:
            w1s.append(np.zeros(1))
            w2s.append(np.zeros(1))
            continue
        ang = 2.0 * np.pi * np.arange(n) / n
        w1s.append(r * np.cos(ang))
        w2s.append(r * np.sin(ang))
    w1, w2 = np.concatenate(w1s), np.concatenate(w2s)
    n = w1.size
    om = np.repeat(np.asarray(cfg.omega_set), n)
    return np.tile(w1, len(cfg.omega_set)), np.tile(w2, len(cfg.omega_set)), om


def sample_grid(cfg: TrainConfig) -> list[SamplePoint]:
    w1, w2, om = sample_arrays(cfg)
    return [SamplePoint(regeq.ExoState(a, b), c) for a, b, c in zip(w1.tolist(), w2.tolist(), om.tolist())]


# ---------------------------------------------------------------------------
# torch loss
# ---------------------------------------------------------------------------

def to_torch(p: net.MlpParams):
    Ws = [torch.tensor(W, dtype=DTYPE, requires_grad=True) for W in p.weights]
    bs = [torch.tensor(b, dtype=DTYPE, requires_grad=True) for b in p.biases]
    return Ws, bs


def from_torch(template: net.MlpParams, Ws, bs) -> net.MlpParams:
    return template.replace(
        [W.detach().numpy().copy() for W in Ws],
        [b.detach().numpy().copy() for b in bs],
    )


def batch_terms(Ws, bs, w1, w2, omega, w_scale, omega_scale, hp: HeliParams):
    """Per-sample ``(|r1|, |r2|, |r3|, bc)`` as torch tensors."""
    j = net.jet_forward(Ws, bs, w1, w2, omega, w_scale, omega_scale, xp=torch)
    out, l1, l2 = j.x.T, j.dx.T, j.ddx.T
    rb = regeq.pde_residuals(out, l1, l2, w1, omega, hp, xp=torch)
    return rb.r1.abs(), rb.r2.abs(), rb.r3.abs(), rb.bc


def torch_loss(Ws, bs, w1, w2, omega, w_scale, omega_scale, hp: HeliParams, lam: float):
    a1, a2, a3, bc = batch_terms(Ws, bs, w1, w2, omega, w_scale, omega_scale, hp)
    terms = torch.stack([a1.mean(), a2.mean(), a3.mean(), bc.mean()])
    return terms[0] + terms[1] + terms[2] + lam * terms[3], terms


def loss_and_grad(p: net.MlpParams, w1, w2, omega, lam: float = 0.1, hp: HeliParams | None = None):
    """Batch loss and its gradient as a flat vector (layout of ``MlpParams.flat``)."""
    hp = hp or HeliParams()
    Ws, bs = to_torch(p)
    t = [torch.as_tensor(np.asarray(a, dtype=float), dtype=DTYPE) for a in (w1, w2, omega)]
    L, _ = torch_loss(Ws, bs, *t, p.w_scale, p.omega_scale, hp, lam)
    L.backward()
    g = np.concatenate([np.concatenate([W.grad.numpy().ravel(), b.grad.numpy()]) for W, b in zip(Ws, bs)])
    return float(L.detach()), g


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

class TrainingAborted(RuntimeError):
    pass


HISTORY_FIELDS = ("epoch", "lr", "L_PDE1", "L_PDE2", "L_PDE3", "L_BC", "total")


def initial_params(cfg: TrainConfig) -> net.MlpParams:
    """Glorot network with the output layer shrunk by ``cfg.output_gain``.

    Starting with outputs near zero keeps the first steps inside the
    physical basin; large initial angles can settle next to the cosine
    clamp at +-pi/2.
    """
    p = net.init(cfg.seed, cfg.layer_dims, omega_scale=max(cfg.omega_set))
    Ws = list(p.weights)
    Ws[-1] = Ws[-1] * cfg.output_gain
    return p.replace(Ws, p.biases)


def train(cfg: TrainConfig, init_params: net.MlpParams | None = None, callback: Callable | None = None):
    """Minimise the residual loss; returns ``(params, history)``.

    ``history`` has one dict per epoch with the keys of ``HISTORY_FIELDS``;
    the terms are sample-weighted means over the epoch's mini-batches.
    """
    hp = cfg.heli
    if init_params is None:
        init_params = initial_params(cfg)
    p0 = init_params
    w1, w2, om = (torch.as_tensor(a, dtype=DTYPE) for a in sample_arrays(cfg))
    n = w1.shape[0]
    rng = np.random.default_rng(cfg.seed)
    Ws, bs = to_torch(p0)
    params = Ws + bs
    m = [torch.zeros_like(t) for t in params]
    v = [torch.zeros_like(t) for t in params]
    step = 0
    backoff = 1.0
    failures = 0
    history = []
    for epoch in range(cfg.epochs):
        lr_epoch = cfg.lr_at(epoch)
        perm = torch.as_tensor(rng.permutation(n))
        sums = np.zeros(4)
        count = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            L, terms = torch_loss(Ws, bs, w1[idx], w2[idx], om[idx], p0.w_scale, p0.omega_scale, hp, cfg.lam)
            if not torch.isfinite(L):
                failures += 1
                backoff *= 0.5
                log.warning("non-finite loss at epoch %d; skipping step, lr factor %.3g", epoch, backoff)
                if failures >= 10:
                    raise TrainingAborted("10 consecutive non-finite losses")
                continue
            failures = 0
            for t in params:
                t.grad = None
            L.backward()
            step += 1
            lr = lr_epoch * backoff
            with torch.no_grad():
                if cfg.optimizer == "sgd":
                    for t in params:
                        t -= lr * t.grad
                else:
                    c1 = 1.0 - cfg.beta1 ** step
                    c2 = 1.0 - cfg.beta2 ** step
                    for t, mt, vt in zip(params, m, v):
                        g = t.grad
                        mt.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
                        vt.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
                        t -= lr * (mt / c1) / ((vt / c2).sqrt() + cfg.eps)
            k = idx.shape[0]
            sums += k * terms.detach().numpy()
            count += k
        if count == 0:
            raise TrainingAborted(f"no finite batch in epoch {epoch}")
        means = sums / count
        row = dict(zip(HISTORY_FIELDS, (epoch, lr_epoch, *means.tolist(), float(means[:3].sum() + cfg.lam * means[3]))))
        history.append(row)
        log.info("epoch %d lr %.3g loss %.4g", epoch, lr_epoch, row["total"])
        if callback is not None:
            callback(row)
    return from_torch(p0, Ws, bs), history


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid for the loss landscape.

    ``rect``: ``n x n`` points on ``[-extent, extent]^2``.
    ``disk``: the ``rect`` points with ``|w| <= extent``.
    ``polar``: ``n`` radii in ``[0, extent]`` times ``n_angles`` angles.
    Each layout is repeated for every value in ``omegas``.
    """

    kind: str = "rect"
    extent: float = 6.0
    n: int = 41
    n_angles: int = 64
    omegas: tuple = (1.0,)

    def points(self):
        if self.n < 1 or not self.omegas:
            raise ValueError("empty grid")
        if self.kind in ("rect", "disk"):
            ax = np.linspace(-self.extent, self.extent, self.n)
            a, b = np.meshgrid(ax, ax, indexing="ij")
            a, b = a.ravel(), b.ravel()
            if self.kind == "disk":
                keep = np.hypot(a, b) <= self.extent * (1 + 1e-12)
                a, b = a[keep], b[keep]
        elif self.kind == "polar":
            if self.n_angles < 1:
                raise ValueError("empty grid")
            r = np.linspace(0.0, self.extent, self.n)
            ang = 2 * np.pi * np.arange(self.n_angles) / self.n_angles
            rr, aa = np.meshgrid(r, ang, indexing="ij")
            a, b = (rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()
        else:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        om = np.repeat(np.asarray(self.omegas, dtype=float), a.size)
        return np.tile(a, len(self.omegas)), np.tile(b, len(self.omegas)), om


def residual_landscape(p: net.MlpParams, grid: GridSpec, hp: HeliParams | None = None, lam: float = 0.1):
    """Rows ``(w1, w2, omega, total_loss)`` sorted lexicographically."""
    hp = hp or HeliParams()
    w1, w2, om = grid.points()
    rb = regeq.residuals_batch(p, w1, w2, om, hp, lam=lam)
    rows = sorted(zip(w1.tolist(), w2.tolist(), om.tolist(), np.asarray(rb.total).tolist()))
    return rows
