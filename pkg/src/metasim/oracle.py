"""Exhaustive delay-order exploration for small fabric instances.

The timed simulator realizes one delay assignment per seed. This engine
abstracts delays away entirely: every pending event may fire next, except
where a physical mechanism forces an order (a wire delivers its
transitions in FIFO order; a correctly matched request delay guarantees
the request edge trails its data bits; timed gateway commands enter in
timestamp order). Depth-first search over the resulting state graph
visits every reachable interleaving outcome, deduplicating converging
states by digest.

A latch firing while data transitions of the same transfer are still
pending reads a stale bus: that is a bundling violation, and with an
under-matched stage the search finds an interleaving exposing it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .codec import Packet
from .kernel import FixedDelay, SimError
from .primitives import Channel, StageSpec, compose_pipeline

DEFAULT_STATE_BUDGET = 10_000_000


class StateBudgetExhausted(SimError):
    """Exploration exceeded its state cap before finishing."""


@dataclass(frozen=True)
class _Pending:
    seq: int
    fire: object
    arg: object
    deps: frozenset
    desc: tuple
    eager: bool = False  # firing order provably unobservable


def _element_name(bound_method) -> str:
    owner = getattr(bound_method, "__self__", None)
    return getattr(owner, "name", type(owner).__name__)


def _canon_value(v):
    if isinstance(v, (list, deque)):
        return tuple(_canon_value(x) for x in v)
    if isinstance(v, dict):
        return tuple(sorted((k, _canon_value(x)) for k, x in v.items()))
    if isinstance(v, set):
        return tuple(sorted(v))
    return v


class ExplorationEngine:
    """Drop-in simulator facade driven by explicit event choices.

    Elements schedule through the same surface as the timed kernel
    (`after`, `at`, and `Wire.drive` via `schedule_wire`); here every
    call lands in a pending set annotated with ordering dependencies
    instead of a time-ordered heap.
    """

    now = 0
    ledger = None
    rng = None

    def __init__(self):
        self.pending: dict[int, _Pending] = {}
        self._seq = 0
        self._last_timed: Optional[int] = None
        self.violations = 0
        self._tracked: list = []

    # -- scheduling surface ---------------------------------------------------

    def _add(self, fire, arg, deps, desc) -> int:
        seq = self._seq
        self._seq += 1
        self.pending[seq] = _Pending(seq, fire, arg, frozenset(deps), desc)
        return seq

    def after(self, delay: int, fire, arg=None) -> int:
        return self._add(
            fire,
            arg,
            (),
            ("poke", _element_name(fire), fire.__name__, _canon_value(arg)),
        )

    def at(self, time: int, fire, arg=None) -> int:
        # Timed injections keep their mutual order: a later command never
        # enters the fabric before an earlier one.
        deps = (self._last_timed,) if self._last_timed in self.pending else ()
        seq = self._add(
            fire,
            arg,
            deps,
            ("timed", time, _element_name(fire), fire.__name__, _canon_value(arg)),
        )
        self._last_timed = seq
        return seq

    def schedule_wire(self, wire, level, after) -> int:
        # A wire is a FIFO medium: transitions already pending on it fire
        # first. `after` carries the data events a soundly matched request
        # must trail; an under-matched channel passes none and races.
        deps = [
            seq
            for seq, rec in self.pending.items()
            if rec.desc[0] == "wire" and rec.desc[1] == wire.name
        ]
        if after:
            deps.extend(after)
        seq = self._seq
        self._seq += 1
        self.pending[seq] = _Pending(
            seq,
            wire.set_level,
            level,
            frozenset(deps),
            ("wire", wire.name, bool(level)),
            eager=wire.oracle_eager and not wire.listeners,
        )
        return seq

    def note_latch(self, channel: Channel):
        data_names = {w.name for w in channel.data}
        for rec in self.pending.values():
            if rec.desc[0] == "wire" and rec.desc[1] in data_names:
                self.violations += 1
                return

    # -- state handling ---------------------------------------------------------

    _SCALAR, _LIST, _DEQUE, _DICT = 0, 1, 2, 3

    def track(self, *objects):
        """Register stateful objects for snapshot/restore/digest.

        Each class declares its mutable state in `_state_attrs`; anything
        else on the object is wiring and stays untouched. Container kinds
        are resolved once here so captures are plain tuple conversions.
        """
        for obj in objects:
            attrs = type(obj)._state_attrs
            if not attrs:
                continue
            kinds = []
            for a in attrs:
                v = getattr(obj, a)
                if isinstance(v, list):
                    k = self._LIST
                elif isinstance(v, deque):
                    k = self._DEQUE
                elif isinstance(v, dict):
                    k = self._DICT
                else:
                    k = self._SCALAR
                kinds.append((a, k))
            self._tracked.append((obj, tuple(kinds)))

    def enabled(self) -> list[int]:
        pending = self.pending
        return sorted(
            seq
            for seq, rec in pending.items()
            if all(d not in pending for d in rec.deps)
        )

    def fire(self, seq: int):
        rec = self.pending.pop(seq)
        rec.fire(rec.arg)

    def drain_eager(self):
        """Fire every enabled order-unobservable event, in seq order."""
        pending = self.pending
        while True:
            ready = [
                seq
                for seq, rec in pending.items()
                if rec.eager and all(d not in pending for d in rec.deps)
            ]
            if not ready:
                return
            for seq in sorted(ready):
                self.fire(seq)

    def _capture_states(self) -> tuple:
        out = []
        for obj, kinds in self._tracked:
            row = []
            for a, k in kinds:
                v = getattr(obj, a)
                if k == 0:
                    row.append(v)
                elif k == 3:
                    row.append(tuple(sorted(v.items())))
                else:
                    row.append(tuple(v))
            out.append(tuple(row))
        return tuple(out)

    def snapshot(self):
        """Immutable capture of fabric state plus the pending set."""
        return (
            self._capture_states(),
            dict(self.pending),
            self.violations,
            self._last_timed,
        )

    def restore(self, snap):
        states, pending, violations, last_timed = snap
        for (obj, kinds), row in zip(self._tracked, states):
            for (a, k), v in zip(kinds, row):
                if k == 0:
                    setattr(obj, a, v)
                elif k == 1:
                    setattr(obj, a, list(v))
                elif k == 2:
                    setattr(obj, a, deque(v))
                else:
                    setattr(obj, a, dict(v))
        self.pending = dict(pending)
        self.violations = violations
        self._last_timed = last_timed

    def _pending_canon(self) -> tuple:
        return tuple(
            sorted(
                (
                    rec.desc,
                    tuple(
                        sorted(
                            self.pending[d].desc for d in rec.deps if d in self.pending
                        )
                    ),
                )
                for rec in self.pending.values()
            )
        )

    def digest_of(self, snap) -> int:
        return hash((snap[0], self._pending_canon(), snap[2]))


# --------------------------------------------------------------------------
# Search
# --------------------------------------------------------------------------


@dataclass
class OracleVerdict:
    deadlock_free: bool
    delivery_complete: bool
    bundling_clean: bool
    states_explored: int
    terminal_count: int
    outcomes: set

    @property
    def ok(self) -> bool:
        return self.deadlock_free and self.delivery_complete and self.bundling_clean

    def as_dict(self) -> dict:
        return {
            "deadlock_free": self.deadlock_free,
            "delivery_complete": self.delivery_complete,
            "bundling_clean": self.bundling_clean,
            "states_explored": self.states_explored,
            "terminal_count": self.terminal_count,
            "distinct_outcomes": len(self.outcomes),
        }


def explore(
    engine: ExplorationEngine,
    expected_deliveries: int,
    outcome_fn: Callable[[], tuple],
    delivered_fn: Callable[[], int],
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> OracleVerdict:
    """DFS over every maximal interleaving of enabled events.

    Terminal states (no enabled events) are scored: a terminal with
    undelivered traffic is a deadlock; any terminal reached through a
    stale latch marks the instance bundling-unclean.
    """
    outcomes = set()
    visited = set()
    states = 0
    terminals = 0
    deadlock_free = True
    bundling_clean = True

    engine.drain_eager()
    root_enabled = engine.enabled()
    if not root_enabled:
        raise ValueError("nothing to explore: no pending events")
    stack = [(engine.snapshot(), root_enabled, 0)]
    while stack:
        snap, enabled, idx = stack[-1]
        if idx >= len(enabled):
            stack.pop()
            continue
        stack[-1] = (snap, enabled, idx + 1)
        engine.restore(snap)
        engine.fire(enabled[idx])
        engine.drain_eager()
        states += 1
        if states > state_budget:
            raise StateBudgetExhausted(f"more than {state_budget} states explored")
        cap = engine.snapshot()
        d = engine.digest_of(cap)
        if d in visited:
            continue
        visited.add(d)
        nxt = engine.enabled()
        if nxt:
            stack.append((cap, nxt, 0))
        else:
            terminals += 1
            outcomes.add(outcome_fn())
            if engine.violations:
                bundling_clean = False
            if delivered_fn() < expected_deliveries:
                deadlock_free = False
    return OracleVerdict(
        deadlock_free=deadlock_free,
        delivery_complete=deadlock_free,
        bundling_clean=bundling_clean,
        states_explored=states,
        terminal_count=terminals,
        outcomes=outcomes,
    )


# --------------------------------------------------------------------------
# Fabric and pipeline instances
# --------------------------------------------------------------------------


def _track_grid(engine: ExplorationEngine, grid):
    engine.track(grid, grid.gateway, grid.gateway.tx, grid.gateway.rx)
    for node in grid.nodes.values():
        engine.track(node)
        engine.track(*node.in_deser.values())
        for op in node.out_ports.values():
            engine.track(op, op.serializer, op.arbiter)
    for ch in grid.channels:
        engine.track(ch.sender, ch.receiver, ch.req, ch.ack, *ch.data)


def grid_outcome(grid, violations: int) -> tuple:
    """Canonical end-of-run digest shared by the oracle and timed runs."""
    regs = tuple((c, tuple(n.registers)) for c, n in sorted(grid.nodes.items()))
    delivered = tuple(pkt for pkt, _t in grid.deliveries)
    reports = tuple((src, code) for src, code, _t in grid.gateway.collected_reports)
    return (regs, delivered, reports, violations > 0)


def exhaustive_oracle(
    width: int,
    height: int,
    commands: list[tuple[int, Packet]],
    *,
    protocol: str = "four_phase",
    bus_width: int = 16,
    matched_delay_ps: Optional[int] = None,
    allow_undermatched: bool = False,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> OracleVerdict:
    """Explore all delay-order interleavings of a small grid workload.

    Bounded to 2x2 grids and 3 commands; beyond that an exhaustive
    reference is out of reach. Addresses are assigned directly, so the
    exploration covers the workload's fabric traffic.
    """
    from .fabric import Grid

    if width > 2 or height > 2:
        raise ValueError("exhaustive exploration is bounded to 2x2 grids")
    if len(commands) > 3:
        raise ValueError("exhaustive exploration is bounded to 3 commands")
    engine = ExplorationEngine()
    grid = Grid(
        engine,
        width,
        height,
        protocol=protocol,
        delay=FixedDelay(1),
        bus_width=bus_width,
        matched_delay_ps=matched_delay_ps,
        allow_undermatched=allow_undermatched,
    )
    grid.assign_addresses()
    _track_grid(engine, grid)
    for t, pkt in commands:
        grid.gateway.inject_at(t, pkt)
    return explore(
        engine,
        expected_deliveries=len(commands),
        outcome_fn=lambda: grid_outcome(grid, engine.violations),
        delivered_fn=lambda: len(grid.deliveries),
        state_budget=state_budget,
    )


def explore_pipeline(
    n_stages: int,
    width: int,
    items: list[int],
    *,
    protocol: str = "four_phase",
    matched_delay_ps: Optional[int] = None,
    allow_undermatched: bool = False,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> OracleVerdict:
    """Explore a linear pipeline; outcomes carry the sink's word order."""
    engine = ExplorationEngine()
    pipe = compose_pipeline(
        engine,
        [StageSpec(f"s{i}", width) for i in range(n_stages)],
        protocol,
        FixedDelay(1),
        matched_delay_ps=matched_delay_ps,
        allow_undermatched=allow_undermatched,
    )
    engine.track(pipe.source, pipe.sink, *pipe.stages)
    for ch in pipe.channels:
        engine.track(ch.sender, ch.receiver, ch.req, ch.ack, *ch.data)
    pipe.source.feed(items)
    pipe.source.start()
    return explore(
        engine,
        expected_deliveries=len(items),
        outcome_fn=lambda: (
            tuple(w for w, _t in pipe.sink.received),
            engine.violations > 0,
        ),
        delivered_fn=lambda: len(pipe.sink.received),
        state_budget=state_budget,
    )
