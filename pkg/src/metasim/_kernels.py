"""Hot numeric kernels with a numba lane and a pure-numpy fallback.

Transition binning is the one genuinely hot loop in analysis: a clocked
baseline at desk scale logs ~1e8 clock edges per millisecond, which are
stored analytically and expanded here. Set METASIM_NUMBA=0 to force the
numpy path; the default uses numba when it imports cleanly.
`benchmarks/bench_kernels.py` compares the two lanes.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_enabled() -> bool:
    flag = os.environ.get("METASIM_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_enabled()


# -- event-record binning ----------------------------------------------------


def _bin_records_numpy(times, counts, t0, bin_width, out):
    idx = (times - t0) // bin_width
    np.add.at(out, idx, counts)


if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _bin_records_numba(times, counts, t0, bin_width, out):  # pragma: no cover
        for i in range(times.shape[0]):
            out[(times[i] - t0) // bin_width] += counts[i]

    @njit(cache=True)
    def _bin_clock_numba(
        offsets, base, period, half, cycles, t0, t1, bin_width, out
    ):  # pragma: no cover
        for w in range(offsets.shape[0]):
            off = offsets[w]
            for k in range(cycles):
                rise = base + k * period + off
                if t0 <= rise <= t1:
                    out[(rise - t0) // bin_width] += 1
                fall = rise + half
                if t0 <= fall <= t1:
                    out[(fall - t0) // bin_width] += 1


def _bin_clock_numpy(offsets, base, period, half, cycles, t0, t1, bin_width, out):
    # Chunk over cycles so the (chunk x wires) intermediate stays small.
    chunk = max(1, 4_000_000 // max(1, offsets.shape[0]))
    n_bins = out.shape[0]
    for k0 in range(0, cycles, chunk):
        ks = np.arange(k0, min(k0 + chunk, cycles), dtype=np.int64)
        rises = (base + ks * period)[:, None] + offsets[None, :]
        for edges in (rises, rises + half):
            flat = edges.ravel()
            flat = flat[(flat >= t0) & (flat <= t1)]
            np.add.at(out, (flat - t0) // bin_width, 1)


def bin_records(times, counts, t0, bin_width, out):
    """Accumulate per-record transition counts into time bins."""
    if times.shape[0] == 0:
        return
    if USE_NUMBA:
        _bin_records_numba(times, counts, t0, bin_width, out)
    else:
        _bin_records_numpy(times, counts, t0, bin_width, out)


def bin_clock_edges(offsets, base, period, half, cycles, t0, t1, bin_width, out):
    """Expand an analytic clock block (2 edges/wire/period) into bins.

    Edge times are base + k*period + offset and the same plus half, for
    k in [0, cycles). Only edges inside [t0, t1] are counted.
    """
    if cycles <= 0 or offsets.shape[0] == 0:
        return
    if USE_NUMBA:
        _bin_clock_numba(
            offsets, base, period, half, cycles, t0, t1, bin_width, out
        )
    else:
        _bin_clock_numpy(offsets, base, period, half, cycles, t0, t1, bin_width, out)
