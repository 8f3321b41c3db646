#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

The engine picks a path at import via REID_FUSE_NUMBA; this script runs
both implementations side by side on bootstrap-shaped workloads, checks
they agree, and reports the speedup.

    python3 benchmarks/bench_kernels.py --queries 1000 --resamples 20000
"""

import argparse
import time

import numpy as np

from reid_fuse import kernels
from reid_fuse.accel import NUMBA_ENABLED


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup (and JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def human(seconds):
    if seconds >= 1.0:
        return f"{seconds:.2f} s"
    if seconds >= 1e-3:
        return f"{seconds * 1e3:.2f} ms"
    return f"{seconds * 1e6:.0f} us"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=1000,
                        help="per-query AP vector length")
    parser.add_argument("--resamples", type=int, default=20_000,
                        help="bootstrap rows per kernel call")
    parser.add_argument("--gallery", type=int, default=1500,
                        help="gallery size for the batched-AP kernel")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not NUMBA_ENABLED:
        parser.error("numba path is disabled (REID_FUSE_NUMBA=0 or numba missing); "
                     "nothing to compare")

    rng = np.random.default_rng(0)
    aps_a = rng.uniform(size=args.queries)
    aps_b = rng.uniform(size=args.queries)
    idx = rng.integers(0, args.queries, size=(args.resamples, args.queries))
    relevance = rng.uniform(size=(args.queries, args.gallery)) < 0.02

    cases = [
        ("resample_means",
         lambda: kernels.resample_means_nb(aps_a, idx),
         lambda: kernels.resample_means_np(aps_a, idx)),
        ("paired_resample_deltas",
         lambda: kernels.paired_resample_deltas_nb(aps_a, aps_b, idx),
         lambda: kernels.paired_resample_deltas_np(aps_a, aps_b, idx)),
        ("ap_batch",
         lambda: kernels.ap_batch_nb(relevance),
         lambda: kernels.ap_batch_np(relevance)),
    ]

    print(f"queries={args.queries} resamples={args.resamples} gallery={args.gallery}")
    print(f"{'kernel':<24} {'numba':>12} {'numpy':>12} {'speedup':>9} {'max |diff|':>12}")
    for name, nb_fn, np_fn in cases:
        got_nb = nb_fn()
        got_np = np_fn()
        mask = ~(np.isnan(got_nb) | np.isnan(got_np))
        diff = float(np.abs(got_nb[mask] - got_np[mask]).max()) if mask.any() else 0.0
        if not np.allclose(got_nb[mask], got_np[mask], rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: paths disagree (max |diff| = {diff:g})")
        t_nb = timeit(nb_fn, repeats=args.repeats)
        t_np = timeit(np_fn, repeats=args.repeats)
        print(f"{name:<24} {human(t_nb):>12} {human(t_np):>12} "
              f"{t_np / t_nb:>8.1f}x {diff:>12.2e}")


if __name__ == "__main__":
    main()
