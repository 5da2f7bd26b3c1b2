"""Deterministic discrete-event simulation core.

Simulation time is a non-negative integer number of picoseconds. Events
are totally ordered by (time, insertion sequence), so a run with a fixed
seed and fixed construction order replays bit-identically. Delay models
never produce a delay below 1 ps; a combinational feedback loop therefore
shows up as an oscillation that exhausts the event budget instead of
hanging the process.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

DEFAULT_MAX_EVENTS = 100_000_000


class SimError(Exception):
    """Base class for simulation faults."""


class SchedulingInPast(SimError):
    """An event was scheduled before the current simulation time."""


class EventBudgetExhausted(SimError):
    """run_to_quiescence hit its event budget with events still pending.

    Usually indicates an oscillating loop or a livelocked protocol. The
    exception carries the time reached and the number of events processed.
    """

    def __init__(self, time: int, processed: int):
        super().__init__(
            f"event budget exhausted after {processed} events at t={time} ps"
        )
        self.time = time
        self.processed = processed


class Event(NamedTuple):
    """One scheduled state change.

    `fire` is a bound method of the target element; calling `fire(arg)`
    performs the action (a new wire level, an FSM poke, ...). (time, seq)
    pairs are unique, so heap ordering never compares `fire`.
    """

    time: int
    seq: int
    fire: Callable
    arg: object


# --------------------------------------------------------------------------
# Delay models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedDelay:
    """Constant propagation delay."""

    ps: int

    def __post_init__(self):
        if self.ps < 1:
            raise ValueError(f"delay must be >= 1 ps, got {self.ps}")

    def sample(self, rng: random.Random) -> int:
        return self.ps

    def bounds(self) -> tuple[int, int]:
        return (self.ps, self.ps)


@dataclass(frozen=True)
class UniformJitter:
    """Delay drawn uniformly from [lo, hi] on every transition."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 1:
            raise ValueError(f"lo must be >= 1 ps, got {self.lo}")
        if self.lo > self.hi:
            raise ValueError(f"lo must be <= hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: random.Random) -> int:
        return rng.randint(self.lo, self.hi)

    def bounds(self) -> tuple[int, int]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class ScaledDelay:
    """A base model stretched by a factor, e.g. a flexed or extended line.

    Samples round(factor * base_sample), floored at 1 ps.
    """

    base: "DelayModel"
    factor: float

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError(f"factor must be > 0, got {self.factor}")

    def sample(self, rng: random.Random) -> int:
        return max(1, round(self.factor * self.base.sample(rng)))

    def bounds(self) -> tuple[int, int]:
        lo, hi = self.base.bounds()
        return (max(1, round(self.factor * lo)), max(1, round(self.factor * hi)))


DelayModel = Union[FixedDelay, UniformJitter, ScaledDelay]


def sample_delay(model: DelayModel, rng: random.Random) -> int:
    """Draw one delay from `model`; always >= 1 ps."""
    return model.sample(rng)


# --------------------------------------------------------------------------
# Event queue and simulator
# --------------------------------------------------------------------------


class EventQueue:
    """Min-heap of events keyed by (time, seq); seq breaks ties.

    "Simultaneous" events are an artifact of discretization; the insertion
    sequence makes their order explicit and reproducible.
    """

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, fire: Callable, arg=None) -> Event:
        if time < self.now:
            raise SchedulingInPast(
                f"event at t={time} ps scheduled while now={self.now} ps"
            )
        ev = Event(time, self._seq, fire, arg)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev


def schedule(event: Event, queue: EventQueue) -> EventQueue:
    """Enqueue a pre-built event. Raises SchedulingInPast if stale."""
    if event.time < queue.now:
        raise SchedulingInPast(
            f"event at t={event.time} ps scheduled while now={queue.now} ps"
        )
    heapq.heappush(queue._heap, event)
    queue._seq = max(queue._seq, event.seq + 1)
    return queue


class Simulator:
    """Sequential event-driven simulator instance.

    One instance owns its queue, its RNG stream and (optionally) a
    transition ledger; independent instances never share mutable state, so
    seed sweeps may run in separate processes freely.
    """

    # Exploration engines override these hooks; the timed engine leaves
    # them None so wires and latches take the fast path.
    schedule_wire = None
    note_latch = None

    def __init__(self, seed: int = 0, ledger=None):
        self.seed = seed
        self.rng = random.Random(seed)
        self.queue = EventQueue()
        self.ledger = ledger
        self.events_processed = 0

    @property
    def now(self) -> int:
        return self.queue.now

    def at(self, time: int, fire: Callable, arg=None) -> Event:
        """Schedule `fire(arg)` at an absolute time."""
        return self.queue.push(time, fire, arg)

    def after(self, delay: int, fire: Callable, arg=None) -> Event:
        """Schedule `fire(arg)` after a strictly positive delay."""
        if delay < 1:
            raise ValueError(f"delay must be >= 1 ps, got {delay}")
        return self.queue.push(self.queue.now + delay, fire, arg)

    def step(self) -> Event:
        ev = self.queue.pop()
        self.events_processed += 1
        ev.fire(ev.arg)
        return ev

    def run_to_quiescence(
        self, max_events: int = DEFAULT_MAX_EVENTS
    ) -> tuple[int, int]:
        """Drain the queue; return (final time, events processed).

        Raises EventBudgetExhausted if max_events fire and events remain,
        which signals a livelock or oscillation rather than progress.
        """
        if max_events <= 0:
            raise ValueError("max_events must be > 0")
        queue = self.queue
        processed = 0
        while queue._heap:
            if processed >= max_events:
                self.events_processed += processed
                raise EventBudgetExhausted(queue.now, processed)
            ev = heapq.heappop(queue._heap)
            queue.now = ev.time
            ev.fire(ev.arg)
            processed += 1
        self.events_processed += processed
        return (queue.now, processed)
