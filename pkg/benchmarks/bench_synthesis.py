#!/usr/bin/env python3
"""Benchmark the channel-synthesis kernels: compiled extension vs numpy.

Times the full sum-of-paths synthesis for a sequence of channel tensors at
a few sizes and reports the speedup plus the worst relative deviation
between the two implementations.

Usage: python benchmarks/bench_synthesis.py [--repeats N]
"""

import argparse
import time

import numpy as np

from csipred import channel_sim as cs
from csipred._kernels import synth_np

try:
    from csipred._kernels import synth as synth_ext
except ImportError:
    synth_ext = None

CASES = [
    # (label, n_tx, n_rx, n_subbands, n_paths, n_times)
    ("small   (8x2,  K=16, P=8,   T=500)", 8, 2, 16, 8, 500),
    ("desk    (32x4, K=52, P=16,  T=2000)", 32, 4, 52, 16, 2000),
    ("dense   (32x4, K=52, P=64,  T=1000)", 32, 4, 52, 64, 1000),
]


def kernel_args(n_tx, n_rx, n_subbands, n_paths, n_times):
    cfg = cs.SimConfig(n_tx=n_tx, n_rx=n_rx, n_subbands=n_subbands,
                       n_paths=n_paths, seed=1)
    sc = cs.make_scenario(cfg, 30.0)
    a_rx, a_tx = cs._steering_matrices(sc, cfg)
    return (
        np.ascontiguousarray(np.arange(n_times) * cfg.sample_period),
        np.ascontiguousarray(sc.gains),
        np.ascontiguousarray(sc.dopplers),
        np.ascontiguousarray(cs._delay_phase(sc, cfg)),
        np.ascontiguousarray(a_rx),
        np.ascontiguousarray(a_tx),
    )


def best_time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - tic)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    opts = parser.parse_args()

    print(f"active kernel: {cs.kernel_backend()}")
    if synth_ext is None:
        print("compiled extension not built; nothing to compare")

    header = f"{'case':<38} {'numpy':>10} {'cython':>10} {'speedup':>8} {'max rel dev':>12}"
    print(header)
    print("-" * len(header))
    for label, *dims in CASES:
        args = kernel_args(*dims)
        t_np = best_time(synth_np.synthesize, args, opts.repeats)
        if synth_ext is None:
            print(f"{label:<38} {t_np * 1e3:>8.1f}ms {'-':>10} {'-':>8} {'-':>12}")
            continue
        t_cy = best_time(synth_ext.synthesize, args, opts.repeats)
        ref = synth_np.synthesize(*args)
        got = synth_ext.synthesize(*args)
        dev = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
        print(f"{label:<38} {t_np * 1e3:>8.1f}ms {t_cy * 1e3:>8.1f}ms "
              f"{t_np / t_cy:>7.2f}x {dev:>12.2e}")


if __name__ == "__main__":
    main()
