#!/usr/bin/env python3
"""Compare the numba lane against the pure-numpy fallback.

The workload mirrors what the metrics layer actually does after a
millisecond-scale clocked run: expand ~1e8 analytic clock edges into
100 ps bins, plus bin a few hundred thousand event records. Run twice to
see warm JIT numbers:

    python3 benchmarks/bench_kernels.py
    METASIM_NUMBA=0 python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from metasim._kernels import (
    USE_NUMBA,
    _bin_clock_numpy,
    _bin_records_numpy,
    bin_clock_edges,
    bin_records,
)

N_WIRES = 511  # 16x16 grid clock tree
CYCLES = 100_000  # 1 ms at 100 MHz
BIN_WIDTH = 100
N_BINS = 10_000_001
N_RECORDS = 500_000


def timeit(label, fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    print(f"  {label:<28s} {best * 1000:9.1f} ms")
    return best


def main():
    rng = np.random.default_rng(0)
    offsets = rng.integers(-400, 400, size=N_WIRES, dtype=np.int64)
    times = rng.integers(0, N_BINS * BIN_WIDTH, size=N_RECORDS, dtype=np.int64)
    counts = rng.integers(1, 4, size=N_RECORDS, dtype=np.int64)
    t1 = N_BINS * BIN_WIDTH - 1

    lane = "numba" if USE_NUMBA else "numpy (fallback)"
    print(f"active lane: {lane}")
    print(f"clock expansion: {N_WIRES} wires x {CYCLES} cycles x 2 edges "
          f"= {2 * N_WIRES * CYCLES:,} transitions")

    out = np.zeros(N_BINS, dtype=np.int64)
    if USE_NUMBA:
        # warm the JIT outside the timed region
        bin_clock_edges(offsets[:4], 10_000, 10_000, 5_000, 10, 0, t1, BIN_WIDTH, out)
        bin_records(times[:4], counts[:4], 0, BIN_WIDTH, out)
        out[:] = 0

    def clock_active():
        out[:] = 0
        bin_clock_edges(offsets, 10_000, 10_000, 5_000, CYCLES, 0, t1, BIN_WIDTH, out)

    def clock_numpy():
        out[:] = 0
        _bin_clock_numpy(offsets, 10_000, 10_000, 5_000, CYCLES, 0, t1, BIN_WIDTH, out)

    def records_active():
        out[:] = 0
        bin_records(times, counts, 0, BIN_WIDTH, out)

    def records_numpy():
        out[:] = 0
        _bin_records_numpy(times, counts, 0, BIN_WIDTH, out)

    a = timeit(f"clock edges [{lane}]", clock_active)
    b = timeit("clock edges [numpy ref]", clock_numpy)
    c = timeit(f"event records [{lane}]", records_active)
    d = timeit("event records [numpy ref]", records_numpy)
    if USE_NUMBA:
        print(f"speedup: clock {b / a:.1f}x, records {d / c:.1f}x")

    # lanes must agree bit for bit
    x = np.zeros(N_BINS, dtype=np.int64)
    y = np.zeros(N_BINS, dtype=np.int64)
    bin_clock_edges(offsets, 10_000, 10_000, 5_000, 1000, 0, t1, BIN_WIDTH, x)
    _bin_clock_numpy(offsets, 10_000, 10_000, 5_000, 1000, 0, t1, BIN_WIDTH, y)
    assert np.array_equal(x, y), "lanes disagree"
    print("lane agreement: ok")


if __name__ == "__main__":
    main()
