"""Compare the compiled and numpy kernel backends on synthetic workloads.

    python benchmarks/bench_kernels.py [--groups 200000] [--records 5000000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from cdrses.calendars import HolidayCalendar
from cdrses.kernels import backends


def _histograms(rng, groups, mean_size):
    sizes = rng.integers(1, 2 * mean_size, groups)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = offsets[-1]
    return (offsets, rng.normal(0, 5, n), rng.normal(0, 5, n),
            rng.integers(1, 50, n).astype(float))


def _timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--groups", type=int, default=200_000)
    ap.add_argument("--mean-size", type=int, default=8)
    ap.add_argument("--records", type=int, default=5_000_000)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    hist = _histograms(rng, args.groups, args.mean_size)
    cal = HolidayCalendar()
    ts = np.sort(rng.integers(cal.start_ts(), cal.end_ts(), args.records)).astype(np.int64)
    hol = cal.holiday_mask()

    impls = backends()
    print(f"histogram_indicators: {args.groups} groups, {len(hist[1])} rows, k={args.k}")
    print(f"classify_slots: {args.records} timestamps")
    print(f"{'backend':10s} {'histogram s':>12s} {'classify s':>12s}")
    results = {}
    for name, mod in impls.items():
        th, oh = _timeit(lambda: mod.histogram_indicators(*hist, args.k), args.repeat)
        tc, oc = _timeit(lambda: mod.classify_slots(ts, cal.tz_offset_s, cal.day0, hol), args.repeat)
        results[name] = (th, tc, oh, oc)
        print(f"{name:10s} {th:12.4f} {tc:12.4f}")

    if len(results) == 2:
        th_np, tc_np, oh_np, oc_np = results["numpy"]
        th_cy, tc_cy, oh_cy, oc_cy = results["cython"]
        # entropy goes through log(), whose last bit may differ between numpy and libm
        diff = max(float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(oh_np, oh_cy))
        same = all(np.array_equal(a, b) for a, b in zip(oc_np, oc_cy))
        print(f"speedup    {th_np / th_cy:11.1f}x {tc_np / tc_cy:11.1f}x")
        print(f"max |histogram diff| {diff:.3g}, slot outputs identical: {same}")
    elif "numpy" in results:
        print("compiled backend not built; only the numpy fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
