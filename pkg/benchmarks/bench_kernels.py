"""Timing comparison of the numeric kernel backends.

Runs every kernel on each importable backend and prints a table of median
wall-clock times.  Usage:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from navcontrast.kernels import available_backends

PAIR_SIZES = (64, 512, 4096)
DTW_SIZES = (32, 128, 256)


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def build_cases(rng):
    cases = []
    for n in PAIR_SIZES:
        sp = rng.uniform(-1.0, 1.0, size=n)
        sn = rng.uniform(-1.0, 1.0, size=n)
        cases.append((f"circle_terms[{n}]",
                      lambda impl, sp=sp, sn=sn:
                      impl.circle_terms(sp, sn, 0.25, 32.0)))
        cases.append((f"infonce_terms[{n}]",
                      lambda impl, sp=sp, sn=sn:
                      impl.infonce_terms(sp, sn, 0.1)))
        cases.append((f"mine_pair_masks[{n}]",
                      lambda impl, sp=sp, sn=sn:
                      impl.mine_pair_masks(sp, sn, 0.25)))
    for n in DTW_SIZES:
        cost = rng.uniform(0.0, 4.0, size=(n, n))
        cases.append((f"dtw_cost[{n}x{n}]",
                      lambda impl, cost=cost: impl.dtw_cost(cost)))
    return cases


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = available_backends()
    cases = build_cases(np.random.default_rng(args.seed))

    names = sorted(backends)
    header = f"{'kernel':<24}" + "".join(f"{n:>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, call in cases:
        row = f"{label:<24}"
        measured = []
        for name in names:
            impl = backends[name]
            call(impl)     # warm up
            t = median_time(lambda: call(impl), args.repeats)
            measured.append(t)
            row += f"{t * 1e6:>12.1f}us"
        if len(measured) == 2:
            compiled = measured[names.index("compiled")]
            python = measured[names.index("python")]
            row += f"{python / compiled:>9.2f}x"
        print(row)
    if "compiled" not in backends:
        print("\ncompiled extension not built; showing python backend only")


if __name__ == "__main__":
    main()
