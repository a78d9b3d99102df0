"""Command-line interface.

Exit codes: 0 success, 1 domain failure (bad input file, infeasible
model, failed check), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import config as config_mod
from . import net, regeq, sim, train

log = logging.getLogger("pinnreg")

TRIM_TARGET = (0.044, 0.018, 0.0061)
LANDSCAPE_HEADER = ("w1", "w2", "omega", "loss")


class CliError(Exception):
    """Domain failure reported with exit code 1."""


def _load_config(path) -> config_mod.RunConfig:
    if path is None:
        return config_mod.RunConfig()
    try:
        return config_mod.load(path)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    except config_mod.ConfigError as exc:
        raise CliError(f"config error: {exc}") from None


def _load_model(path) -> net.MlpParams:
    if path is None:
        raise CliError("--model is required")
    try:
        p = net.load(path)
    except FileNotFoundError:
        raise CliError(f"model file not found: {path}") from None
    except net.ModelFileError as exc:
        raise CliError(f"bad model file {path}: {exc}") from None
    if p.layer_dims[0] != 3 or p.layer_dims[-1] != 3:
        raise CliError(f"{path}: architecture {p.layer_dims} does not map (w1, w2, omega) to 3 outputs")
    return p


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _out_path(args, cfg, default_name) -> str:
    return args.out if args.out else os.path.join(cfg.output.dir, default_name)


def history_path(model_path: str) -> str:
    root, _ = os.path.splitext(model_path)
    return root + ".loss.csv"


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = _out_path(args, cfg, "model.json")
    tcfg = cfg.train_config()

    def report(row):
        log.info("epoch %d lr %.3g loss %.6g", row["epoch"], row["lr"], row["total"])

    try:
        p, history = train.train(tcfg, callback=report)
    except train.TrainingAborted as exc:
        raise CliError(f"training aborted: {exc}") from None
    _ensure_parent(out)
    net.save(p, out)
    hist = args.history or history_path(out)
    with open(hist, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(train.HISTORY_FIELDS)
        for row in history:
            wr.writerow([row["epoch"]] + [_fmt(row[k]) for k in train.HISTORY_FIELDS[1:]])
    print(f"model written to {out}; loss history to {hist}; final loss {history[-1]['total']:.6g}")
    return 0


def cmd_landscape(args) -> int:
    cfg = _load_config(args.config)
    p = _load_model(args.model)
    g = cfg.grid_spec()
    over = {k: getattr(args, k) for k in ("kind", "extent", "n") if getattr(args, k) is not None}
    if args.omegas is not None:
        over["omegas"] = tuple(float(x) for x in args.omegas.split(",") if x.strip())
    if over:
        g = train.GridSpec(**{**g.__dict__, **over})
    try:
        rows = train.residual_landscape(p, g, cfg.heli, cfg.train.lam)
    except ValueError as exc:
        raise CliError(f"landscape: {exc}") from None
    if not rows:
        raise CliError("landscape: empty grid")
    out = _out_path(args, cfg, "landscape.csv")
    _ensure_parent(out)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(LANDSCAPE_HEADER)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])
    vals = np.array([r[3] for r in rows])
    print(f"{len(rows)} points; median {np.median(vals):.6g}; max {vals.max():.6g}; written to {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    p = _load_model(args.model)
    w1 = cfg.sim.w1_0 if args.w1 is None else args.w1
    omega = cfg.sim.omega if args.omega is None else args.omega
    T = cfg.sim.T if args.T is None else args.T
    dt = cfg.sim.dt if args.dt is None else args.dt
    if not (omega > 0 and T > 0 and dt > 0):
        raise CliError("omega, T and dt must be positive")
    mode = args.mode or cfg.sim.mode
    res = sim.simulate((w1, cfg.sim.w2_0), omega, T, dt, p, cfg.gains, cfg.heli, mode=mode)
    if args.out:
        _ensure_parent(args.out)
        sim.write_trajectory_csv(res, args.out)
    status = f"diverged at t={res.diverge_time:.2f}" if res.diverged else "no divergence"
    print(f"w1_0={w1:g} omega={omega:g}: mean_abs_ez={res.mean_abs_ez:.6g} max_abs_ez={res.max_abs_ez:.6g} {status}")
    return 0


def cmd_grid(args) -> int:
    cfg = _load_config(args.config)
    p = _load_model(args.model)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise CliError("--workers must be at least 1")
    try:
        rows = sim.grid_experiment(
            cfg.grid.w1_list, cfg.grid.omega_list, cfg.sim.T, p, cfg.gains, cfg.heli, dt=cfg.sim.dt,
            train_radii=cfg.train.radii, train_omegas=cfg.exo.omega_set, mode=cfg.sim.mode, workers=workers,
        )  # fmt: skip
    except ValueError as exc:
        raise CliError(f"grid: {exc}") from None
    out = _out_path(args, cfg, "grid.csv")
    _ensure_parent(out)
    sim.write_grid_csv(rows, out)
    n_div = sum(r.diverged for r in rows)
    print(f"{len(rows)} cells ({n_div} diverged) written to {out}")
    return 0


def cmd_stats(args) -> int:
    if not os.path.isfile(args.grid_csv):
        raise CliError(f"grid file not found: {args.grid_csv}")
    try:
        rows = sim.read_grid_csv(args.grid_csv)
        st = sim.error_stats(rows, bins=args.bins)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(f"mean {_fmt(st.mean)}")
    print(f"median {_fmt(st.median)}")
    print(f"diverged {st.n_diverged} of {st.n_ok + st.n_diverged}")
    for c, lo, hi in zip(st.counts, st.edges[:-1], st.edges[1:]):
        print(f"  [{lo:.4g}, {hi:.4g}) {int(c)}")
    return 0


def cmd_trim_check(args) -> int:
    cfg = _load_config(args.config)
    p = _load_model(args.model)
    tol = cfg.trim.tolerance if args.tolerance is None else args.tolerance
    if tol < 0:
        raise CliError("tolerance must be nonnegative")
    ok = True
    for om in cfg.exo.omega_set:
        out = net.forward(p, 0.0, 0.0, om)
        dev = [abs(float(v) - t) for v, t in zip(out, TRIM_TARGET)]
        good = all(math.isfinite(d) and d <= tol for d in dev)
        ok &= good
        print(
            f"omega={om:g} pi_phi={out.pi_phi:.6f} pi_theta={out.pi_theta:.6f} c_b={out.c_b:.6f} "
            f"deviation=({dev[0]:.2e}, {dev[1]:.2e}, {dev[2]:.2e}) {'ok' if good else 'FAIL'}"
        )
    exact = regeq.static_trim(cfg.heli)
    print(f"exact hover trim ({exact[0]:.6f}, {exact[1]:.6f}, {exact[2]:.6f}); tolerance {tol:g}")
    return 0 if ok else 1


def cmd_config(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    sys.stdout.write(config_mod.dump(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinnreg", description="Neural regulator-equation solver for a model helicopter.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, model=True, out=True):
        sp.add_argument("--config", help="run configuration file (section.key = value)")
        if model:
            sp.add_argument("--model", help="model JSON file")
        if out:
            sp.add_argument("--out", help="output file")

    sp = sub.add_parser("train", help="train a network and write the model plus loss history")
    common(sp, model=False)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--history", help="loss-history CSV (default: next to the model)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("landscape", help="residual loss over a dense (w1, w2) grid")
    common(sp)
    sp.add_argument("--kind", choices=("rect", "disk", "polar"))
    sp.add_argument("--extent", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--omegas", help="comma-separated frequencies")
    sp.set_defaults(func=cmd_landscape)

    sp = sub.add_parser("simulate", help="one closed-loop run")
    common(sp)
    sp.add_argument("--w1", type=float, help="initial amplitude w1(0)")
    sp.add_argument("--omega", type=float)
    sp.add_argument("--T", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--mode", choices=tuple(sim.MODES))
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("grid", help="closed-loop runs over a (w1(0), omega) grid")
    common(sp)
    sp.add_argument("--workers", type=int, help="process pool size (default: CPU count)")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("stats", help="mean, median and histogram of a grid CSV")
    sp.add_argument("grid_csv")
    sp.add_argument("--bins", type=int, default=10)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("trim-check", help="compare the network at w=0 with the hover trim")
    common(sp, out=False)
    sp.add_argument("--tolerance", type=float)
    sp.set_defaults(func=cmd_trim_check)

    sp = sub.add_parser("config", help="configuration utilities")
    sp.add_argument("action", choices=("dump",))
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_config)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
