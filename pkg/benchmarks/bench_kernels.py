"""Compare the compiled and pure-Python closed-loop kernels.

    python3 benchmarks/bench_kernels.py [--steps 500] [--repeat 3]

Uses a freshly initialised default-size network, so no trained model is needed.
"""
import argparse
import time

import numpy as np

from pinnreg import kernels, net, sim
from pinnreg.heli import HeliParams


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = net.init(0)
    hp = HeliParams()
    x0 = sim.init_on_manifold((2.0, 0.0), 1.0, p).to_array()
    gains = sim.Gains().as_tuple()
    print(f"backends available: {', '.join(kernels.available())}")
    results = {}
    for backend in kernels.available():
        for mode in ("wrench", "actuator"):
            t, out = best_of(
                lambda: kernels.run_closed_loop(x0, 2.0, 0.0, 1.0, args.steps, 0.01, p, hp, gains, sim.MODES[mode], 1e4, backend=backend),
                args.repeat,
            )
            results[backend, mode] = (t, out[0])
            print(f"{backend:>8} {mode:>8}: {args.steps} RK4 steps in {t * 1e3:8.1f} ms ({t / args.steps * 1e6:7.1f} us/step)")
    if "compiled" in kernels.available():
        for mode in ("wrench", "actuator"):
            tc, Xc = results["compiled", mode]
            tp, Xp = results["python", mode]
            print(f"{mode}: speedup {tp / tc:.2f}x, max state difference {np.max(np.abs(Xc - Xp)):.2e}")


if __name__ == "__main__":
    main()
