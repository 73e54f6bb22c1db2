"""Time the routing kernels and a full simulation under both backends.

    python3 benchmarks/bench_kernels.py --sizes 4,8,12 --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from etsim import aes_preset, build_platform
from etsim.control import ControlConfig
from etsim.kernels import HAVE_NUMBA, floyd_warshall, routing_kernel
from etsim.routing import module_index, weights_ear
from etsim.sim import SimConfig, run


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_inputs(width: int, seed: int):
    app = aes_preset()
    platform = build_platform(app, width, width)
    rng = np.random.default_rng(seed)
    levels = rng.integers(0, platform.levels, platform.K)
    W = weights_ear(platform.topology, levels)
    members, offsets = module_index(platform.mapping)
    return app, platform, W, members, offsets


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="4,8,12,16", help="mesh widths")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sim", action="store_true", help="also time a full 8x8 simulation")
    args = ap.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    widths = [int(v) for v in args.sizes.split(",")]

    if HAVE_NUMBA:  # compile outside the timed region
        _, _, W, members, offsets = kernel_inputs(2, 0)
        D, S = floyd_warshall(W, "numba")
        routing_kernel(D, S, members, offsets, np.zeros(len(W), bool), np.full((len(W), 3), -1), "numba")

    print(f"{'K':>5} {'kernel':>14} " + " ".join(f"{b:>12}" for b in backends) + "  speedup")
    for w in widths:
        _, platform, W, members, offsets = kernel_inputs(w, w)
        K = platform.K
        D, S = floyd_warshall(W, "numpy")
        flags = np.zeros(K, dtype=bool)
        flags[::5] = True
        prev = np.zeros((K, 3), dtype=np.int64)
        jobs = {
            "floyd-warshall": lambda b: floyd_warshall(W, b),
            "routing-table": lambda b: routing_kernel(D, S, members, offsets, flags, prev, b),
        }
        for name, job in jobs.items():
            t = {b: best_of(lambda: job(b), args.repeat) for b in backends}
            ratio = t["numpy"] / t["numba"] if "numba" in t else float("nan")
            cells = " ".join(f"{1e3 * t[b]:>10.3f}ms" for b in backends)
            print(f"{K:>5} {name:>14} {cells}  {ratio:6.1f}x")

    if args.sim:
        app = aes_preset()
        platform = build_platform(app, 8, 8)
        for b in backends:
            t = best_of(lambda: run(app, platform, ControlConfig(), SimConfig(backend=b)), 1)
            print(f"8x8 EAR simulation, {b}: {t:.2f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
