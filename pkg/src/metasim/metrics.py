"""Turning wire transitions into energy, emission, and latency figures.

Every real wire transition lands in the ledger exactly once (suppressed
no-ops are counted separately, never as transitions). The clocked
baseline's clock activity is perfectly regular, so it is stored as
analytic blocks and expanded on demand instead of being logged edge by
edge. Analysis functions are pure over a finished ledger.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import bin_clock_edges, bin_records

WIRE_CLASS_NAMES = {0: "data", 1: "handshake", 2: "clock"}


class MetricsError(Exception):
    pass


class UnmatchedDelivery(MetricsError):
    """Delivery bookkeeping does not pair up with the injections."""


class WorkloadMismatch(MetricsError):
    """Two runs being compared did not execute the same command list."""


@dataclass(frozen=True)
class EnergyParams:
    """Lumped switching-energy model: E = 1/2 * C * Vdd^2 per transition."""

    c_eff: float = 10e-15  # farads per transition endpoint
    vdd: float = 1.0  # volts

    def __post_init__(self):
        if self.c_eff <= 0 or self.vdd <= 0:
            raise ValueError("energy parameters must be positive")

    @property
    def joules_per_transition(self) -> float:
        return 0.5 * self.c_eff * self.vdd * self.vdd


@dataclass(frozen=True)
class ClockBlock:
    """Analytic record of periodic clock activity.

    Each wire toggles at base + k*period + offset and again half a period
    later, for k in [0, cycles): two transitions per wire per period,
    independent of data activity.
    """

    offsets: np.ndarray  # int64 skew offset per clock wire
    base: int  # time of the k=0 rising edge for offset 0
    period: int
    cycles: int

    @property
    def n_wires(self) -> int:
        return int(self.offsets.shape[0])

    def transition_count(self) -> int:
        return 2 * self.n_wires * self.cycles

    def end_time(self) -> int:
        if self.cycles == 0 or self.n_wires == 0:
            return 0
        return int(
            self.base
            + (self.cycles - 1) * self.period
            + self.period // 2
            + int(self.offsets.max())
        )


class TransitionLedger:
    """Append-only record of wire transitions for one simulation instance."""

    def __init__(self):
        self.wire_names: list[str] = []
        self.wire_classes: list[int] = []
        self._idx: list[int] = []
        self._time: list[int] = []
        self._count: list[int] = []
        self.suppressed = 0
        self.clock_blocks: list[ClockBlock] = []
        self.workload_start = 0
        self._frozen = None
        self._times_by_wire = None

    def register_wire(self, name: str, wclass: int) -> int:
        self.wire_names.append(name)
        self.wire_classes.append(wclass)
        return len(self.wire_names) - 1

    def log(self, idx: int, time: int, n: int = 1):
        self._idx.append(idx)
        self._time.append(time)
        self._count.append(n)
        self._frozen = None
        self._times_by_wire = None

    def add_clock_block(self, block: ClockBlock):
        self.clock_blocks.append(block)

    def mark_workload_start(self, time: int):
        self.workload_start = time

    def __len__(self) -> int:
        return len(self._idx)

    def arrays(self):
        if self._frozen is None:
            self._frozen = (
                np.asarray(self._idx, dtype=np.int64),
                np.asarray(self._time, dtype=np.int64),
                np.asarray(self._count, dtype=np.int64),
            )
        return self._frozen

    def times_for(self, wire_idx: int) -> list[int]:
        """Transition times of one wire, in order."""
        if self._times_by_wire is None:
            by_wire: dict[int, list[int]] = {}
            for i, t in zip(self._idx, self._time):
                by_wire.setdefault(i, []).append(t)
            self._times_by_wire = by_wire
        return self._times_by_wire.get(wire_idx, [])

    def end_time(self) -> int:
        end = self._time[-1] if self._time else 0
        for b in self.clock_blocks:
            end = max(end, b.end_time())
        return end

def _clock_transitions_in(block: ClockBlock, t0: int, t1: Optional[int]) -> int:
    """Count block edges with t0 <= t (<= t1). Exact, no expansion."""
    if block.cycles == 0 or block.n_wires == 0:
        return 0
    total = 0
    for off in block.offsets.tolist():
        for extra in (0, block.period // 2):
            first = block.base + off + extra
            # k range with t0 <= first + k*period (<= t1)
            k_lo = max(0, -(-(t0 - first) // block.period))
            k_hi = block.cycles - 1
            if t1 is not None:
                k_hi = min(k_hi, (t1 - first) // block.period)
            if k_hi >= k_lo:
                total += k_hi - k_lo + 1
    return total


# --------------------------------------------------------------------------
# Energy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    total_j: float
    by_class_j: dict
    transitions: dict
    suppressed: int


def energy(
    ledger: TransitionLedger,
    params: EnergyParams = EnergyParams(),
    start: Optional[int] = None,
) -> EnergyReport:
    """Total and per-class switching energy from `start` (default: the
    workload mark) to the end of the run."""
    t0 = ledger.workload_start if start is None else start
    counts = {name: 0 for name in WIRE_CLASS_NAMES.values()}
    if len(ledger):
        idx, time, n = ledger.arrays()
        mask = time >= t0
        if mask.any():
            classes = np.asarray(ledger.wire_classes, dtype=np.int64)[idx[mask]]
            per_class = np.bincount(classes, weights=n[mask], minlength=3)
            for code, name in WIRE_CLASS_NAMES.items():
                counts[name] += int(per_class[code])
    for block in ledger.clock_blocks:
        counts["clock"] += _clock_transitions_in(block, t0, None)
    e = params.joules_per_transition
    by_class = {name: c * e for name, c in counts.items()}
    return EnergyReport(
        total_j=sum(by_class.values()),
        by_class_j=by_class,
        transitions=counts,
        suppressed=ledger.suppressed,
    )


# --------------------------------------------------------------------------
# Emission profile
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EmissionHistogram:
    """Time-domain switching concentration as an emission proxy.

    peak_to_average divides the busiest bin by the mean transitions per
    bin over the observation span, floored at one transition per bin: a
    fabric that is mostly silent has nothing to add up in phase, so the
    floor keeps idleness from being scored as concentration.
    """

    bin_width: int
    start: int
    counts: np.ndarray
    peak: int
    total: int

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def peak_to_average(self) -> float:
        if self.total == 0:
            return 1.0
        mean = self.total / self.n_bins
        return self.peak / max(1.0, mean)

    def nonzero_bins(self):
        """(bin index, count) pairs for CSV export."""
        nz = np.nonzero(self.counts)[0]
        return [(int(i), int(self.counts[i])) for i in nz]


def emission_profile(
    ledger: TransitionLedger,
    bin_width: int = 100,
    start: Optional[int] = None,
    end: Optional[int] = None,
) -> EmissionHistogram:
    """Histogram all transitions in [start, end] into bin_width bins."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    t0 = ledger.workload_start if start is None else start
    t1 = ledger.end_time() if end is None else end
    t1 = max(t1, t0)
    n_bins = max(1, -(-(t1 - t0 + 1) // bin_width))
    out = np.zeros(n_bins, dtype=np.int64)
    if len(ledger):
        idx, time, n = ledger.arrays()
        mask = (time >= t0) & (time <= t1)
        bin_records(time[mask], n[mask], t0, bin_width, out)
    for block in ledger.clock_blocks:
        bin_clock_edges(
            block.offsets,
            block.base,
            block.period,
            block.period // 2,
            block.cycles,
            t0,
            t1,
            bin_width,
            out,
        )
    return EmissionHistogram(
        bin_width=bin_width,
        start=t0,
        counts=out,
        peak=int(out.max()),
        total=int(out.sum()),
    )


# --------------------------------------------------------------------------
# Latency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyStats:
    count: int
    min_ps: Optional[int]
    mean_ps: Optional[float]
    max_ps: Optional[int]

    def as_dict(self):
        return {
            "count": self.count,
            "min": self.min_ps,
            "mean": self.mean_ps,
            "max": self.max_ps,
        }


def _packet_key(pkt):
    return (pkt.opcode, pkt.dest, pkt.src, pkt.load_index, pkt.payload)


def latency_report(injections, deliveries) -> LatencyStats:
    """Per-packet latency stats: delivery time minus injection time.

    Packets are matched by content, oldest injection first, so duplicate
    commands pair up in FIFO order. Any unpairable delivery or leftover
    mismatch raises UnmatchedDelivery.
    """
    pending: dict = {}
    for pkt, t in injections:
        pending.setdefault(_packet_key(pkt), deque()).append(t)
    lats = []
    for pkt, t in deliveries:
        q = pending.get(_packet_key(pkt))
        if not q:
            raise UnmatchedDelivery(f"delivery without injection: {pkt}")
        lats.append(t - q.popleft())
    leftover = sum(len(q) for q in pending.values())
    if leftover:
        raise UnmatchedDelivery(f"{leftover} injection(s) never delivered")
    if not lats:
        return LatencyStats(0, None, None, None)
    return LatencyStats(
        count=len(lats),
        min_ps=min(lats),
        mean_ps=sum(lats) / len(lats),
        max_ps=max(lats),
    )


# --------------------------------------------------------------------------
# Async / sync comparison
# --------------------------------------------------------------------------


def compare_reports(async_report: dict, sync_report: dict) -> dict:
    """Combine two run reports over the same workload into one record."""
    if async_report["scenario"]["workload"] != sync_report["scenario"]["workload"]:
        raise WorkloadMismatch("runs executed different command lists")
    a_e = async_report["energy"]["total_j"]
    s_e = sync_report["energy"]["total_j"]
    return {
        "workload_commands": len(async_report["scenario"]["workload"]),
        "energy_total_j": {"async": a_e, "sync": s_e},
        "energy_ratio_async_over_sync": (a_e / s_e) if s_e > 0 else None,
        "peak_to_average": {
            "async": async_report["emission"]["peak_to_average"],
            "sync": sync_report["emission"]["peak_to_average"],
        },
        "latency_ps": {
            "async": async_report["latency_ps"],
            "sync": sync_report["latency_ps"],
        },
        "sync_clock_power_share": sync_report["clock_power_share"],
    }
