"""Run configuration: a line-based ``section.key = value`` text format.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a default, so an empty file is a valid configuration.
``dump`` writes every key in a fixed order, which makes the dumped text a
fixed point of ``parse`` followed by ``dump``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from . import train
from .heli import HeliParams
from .sim import Gains, MODES


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, key: str | None = None, path=None):
        where = [str(path)] if path is not None else []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(", ".join(where) + ": " + msg if where else msg)
        self.line, self.key, self.path = line, key, path


@dataclass(frozen=True)
class ExoSection:
    omega_set: tuple = train.DEFAULT_OMEGAS


@dataclass(frozen=True)
class TrainSection:
    radii: tuple = train.DEFAULT_RADII
    epochs: int = 100
    batch_size: int = 64
    lr_init: float = 1e-3
    lr_final: float = 1e-6
    lam: float = 0.1
    seed: int = 0
    target_samples: int = 24499
    layer_dims: tuple = (3, 32, 256, 256, 32, 3)
    optimizer: str = "adam"
    output_gain: float = 0.01


@dataclass(frozen=True)
class SimSection:
    T: float = 30.0
    dt: float = 0.01
    mode: str = "wrench"
    w1_0: float = 5.0
    w2_0: float = 0.0
    omega: float = 1.0


@dataclass(frozen=True)
class GridSection:
    w1_list: tuple = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    omega_list: tuple = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class LandscapeSection:
    kind: str = "disk"
    extent: float = 6.0
    n: int = 61
    n_angles: int = 64
    omegas: tuple = train.DEFAULT_OMEGAS


@dataclass(frozen=True)
class TrimSection:
    tolerance: float = 0.02


@dataclass(frozen=True)
class OutputSection:
    dir: str = "."


@dataclass(frozen=True)
class RunConfig:
    heli: HeliParams = field(default_factory=HeliParams)
    exo: ExoSection = field(default_factory=ExoSection)
    train: TrainSection = field(default_factory=TrainSection)
    gains: Gains = field(default_factory=Gains)
    sim: SimSection = field(default_factory=SimSection)
    grid: GridSection = field(default_factory=GridSection)
    landscape: LandscapeSection = field(default_factory=LandscapeSection)
    trim: TrimSection = field(default_factory=TrimSection)
    output: OutputSection = field(default_factory=OutputSection)

    def train_config(self) -> train.TrainConfig:
        t = self.train
        return train.TrainConfig(
            radii=t.radii, omega_set=self.exo.omega_set, lr_init=t.lr_init, lr_final=t.lr_final,
            epochs=t.epochs, lam=t.lam, batch_size=t.batch_size, seed=t.seed,
            target_samples=t.target_samples, layer_dims=t.layer_dims, optimizer=t.optimizer,
            output_gain=t.output_gain, heli=self.heli,
        )  # fmt: skip

    def grid_spec(self) -> train.GridSpec:
        ls = self.landscape
        return train.GridSpec(kind=ls.kind, extent=ls.extent, n=ls.n, n_angles=ls.n_angles, omegas=ls.omegas)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=int(seed)))


SECTIONS = [f.name for f in fields(RunConfig)]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _convert(raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if not raw.strip():
            return ()
        kind = int if default and all(isinstance(x, int) for x in default) else float
        return tuple(kind(x.strip()) for x in raw.split(","))
    return raw


def _validate(cfg: RunConfig) -> None:
    if cfg.sim.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.sim.mode!r}", key="sim.mode")
    if not (cfg.sim.T > 0 and cfg.sim.dt > 0):
        raise ConfigError("T and dt must be positive", key="sim.T")
    if cfg.trim.tolerance < 0:
        raise ConfigError("tolerance must be nonnegative", key="trim.tolerance")
    if cfg.landscape.kind not in ("rect", "disk", "polar"):
        raise ConfigError(f"unknown grid kind {cfg.landscape.kind!r}", key="landscape.kind")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse(text: str, path=None) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    defaults = RunConfig()
    seen = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError("expected 'section.key = value'", line=line_no, path=path)
        key, raw = (x.strip() for x in s.split("=", 1))
        if "." not in key:
            raise ConfigError("key must be 'section.key'", line=line_no, key=key, path=path)
        sec, name = key.split(".", 1)
        if sec not in values:
            raise ConfigError(f"unknown section {sec!r}", line=line_no, key=key, path=path)
        section_default = getattr(defaults, sec)
        names = {f.name for f in fields(section_default)}
        if name not in names:
            raise ConfigError("unknown key", line=line_no, key=key, path=path)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", line=line_no, key=key, path=path)
        seen[key] = line_no
        try:
            values[sec][name] = _convert(raw, getattr(section_default, name))
        except ValueError as exc:
            raise ConfigError(f"bad value {raw!r} ({exc})", line=line_no, key=key, path=path) from None
    try:
        cfg = RunConfig(**{s: replace(getattr(defaults, s), **values[s]) for s in SECTIONS})
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from None
    _validate(cfg)
    return cfg


def load(path) -> RunConfig:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), path=path)


def dump(cfg: RunConfig) -> str:
    out = []
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        for f in fields(obj):
            out.append(f"{sec}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(out) + "\n"
