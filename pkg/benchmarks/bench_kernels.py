"""Compiled kernels vs the numpy fallback on the Legendre stage.

    python benchmarks/bench_kernels.py [--nside 32] [--lmax 64] [--repeat 3]

Both backends must produce bitwise-identical panels; the script checks
that before reporting timings.
"""

import argparse
import time

import numpy as np

from ringsht._timing import StageTimer
from ringsht.cli import random_alm
from ringsht.grid import build_healpix_grid
from ringsht.transforms import KERNELS, DeltaPanel, accumulate_alm, compute_delta_A


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nside", type=int, default=32)
    ap.add_argument("--lmax", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    g = build_healpix_grid(args.nside)
    a = random_alm(args.lmax, args.lmax, seed=1)
    timer = StageTimer()
    compute_delta_A(a, g.cos_theta, sin_thetas=g.sin_theta, timer=timer)
    steps = timer.executed_steps
    print(f"nside={args.nside} lmax={args.lmax} rings={g.n_rings} steps={steps}")
    print(f"{'kernel':<11} {'stage':<11} {'compiled_s':>11} {'python_s':>11} {'speedup':>8}")
    for kernel in KERNELS:
        runs = {}
        for backend in ("compiled", "python"):
            runs[backend] = best_of(
                lambda: compute_delta_A(a, g.cos_theta, sin_thetas=g.sin_theta, kernel=kernel, backend=backend),
                args.repeat,
            )
        assert np.array_equal(runs["compiled"][1].entries, runs["python"][1].entries)
        tc, tp = runs["compiled"][0], runs["python"][0]
        print(f"{kernel:<11} {'synthesis':<11} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f}")

        synth = runs["compiled"][1]
        panel = DeltaPanel("S", synth.entries, synth.ring_set, synth.m_set)
        acc = {}
        for backend in ("compiled", "python"):
            acc[backend] = best_of(
                lambda: accumulate_alm(panel, g.cos_theta, lmax=args.lmax, mmax=args.lmax,
                                       sin_thetas=g.sin_theta, kernel=kernel, backend=backend),
                args.repeat,
            )
        assert np.array_equal(acc["compiled"][1].values, acc["python"][1].values)
        tc, tp = acc["compiled"][0], acc["python"][0]
        print(f"{kernel:<11} {'analysis':<11} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
