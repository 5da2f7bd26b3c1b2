"""Gate-level asynchronous building blocks.

Wires, the Muller-C element, transparent latches, matched delays, and the
two bundled-data handshake protocols (four-phase return-to-zero and
two-phase transition signalling). Handshake controllers are modeled as
state machines stepped on wire transitions; pure step functions carry the
protocol logic and the event-driven wrappers bind them to wires.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

from .kernel import DelayModel, SimError, Simulator

# Wire classes, used by the energy/emission ledger.
WIRE_DATA = 0
WIRE_HANDSHAKE = 1
WIRE_CLOCK = 2


class ProtocolViolation(SimError):
    """A handshake signal changed out of the expected order."""


class DelayUnderMatch(SimError):
    """A stage's request delay does not cover its data-path worst case."""


class InterfaceMismatch(SimError):
    """Adjacent pipeline stages disagree on width or protocol."""


FOUR_PHASE = "four_phase"
TWO_PHASE = "two_phase"


# --------------------------------------------------------------------------
# Wire
# --------------------------------------------------------------------------


class Wire:
    """One signal line with a per-transition sampled propagation delay.

    Driving the wire to its current level is a suppressed no-op (counted,
    never double-counted as a transition). Listeners are called in
    registration order, synchronously, when the level actually changes.
    """

    __slots__ = (
        "sim",
        "name",
        "wclass",
        "delay",
        "level",
        "last_transition",
        "listeners",
        "ledger_idx",
        "oracle_eager",
        "_last_sched",
    )
    _state_attrs = ("level",)

    def __init__(self, sim: Simulator, name: str, wclass: int, delay: DelayModel):
        self.sim = sim
        self.name = name
        self.wclass = wclass
        self.delay = delay
        self.level = False
        self.last_transition = 0
        self.listeners: list[Callable] = []
        self.ledger_idx = (
            sim.ledger.register_wire(name, wclass) if sim.ledger is not None else -1
        )
        # Exploration may fire this wire's transitions eagerly when their
        # order is provably unobservable (set by the owning channel).
        self.oracle_eager = False
        self._last_sched = None

    def drive(self, level: bool, extra_delay: int = 0, after=None):
        """Schedule a transition after extra_delay plus the wire delay.

        `after` lists events that must precede this one under exhaustive
        exploration (bundling constraints); the timed engine ignores it.
        """
        sched = self.sim.schedule_wire
        if sched is not None:  # exploration engine hook
            return sched(self, level, after)
        d = extra_delay + self.delay.sample(self.sim.rng)
        return self.sim.after(d, self.set_level, level)

    def set_level(self, level: bool):
        if level == self.level:
            if self.sim.ledger is not None:
                self.sim.ledger.suppressed += 1
            return
        self.level = level
        now = self.sim.now
        self.last_transition = now
        if self.sim.ledger is not None:
            self.sim.ledger.log(self.ledger_idx, now)
        for cb in self.listeners:
            cb(self)


# --------------------------------------------------------------------------
# Muller-C element and friends
# --------------------------------------------------------------------------


def muller_c_step(inputs: list[bool], prev_output: bool) -> bool:
    """State-holding agreement gate: all-1 -> 1, all-0 -> 0, else hold."""
    if not inputs:
        raise ValueError("muller_c_step needs at least one input")
    if all(inputs):
        return True
    if not any(inputs):
        return False
    return prev_output


class MullerC:
    """Event-driven Muller-C element over input wires."""

    def __init__(self, sim: Simulator, name: str, inputs: list[Wire], output: Wire):
        self.name = name
        self.inputs = inputs
        self.output = output
        self._state = output.level
        for w in inputs:
            w.listeners.append(self._on_input)

    def _on_input(self, _wire):
        new = muller_c_step([w.level for w in self.inputs], self._state)
        if new != self._state:
            self._state = new
            self.output.drive(new)


class Inverter:
    """Single inverting stage; a self-loop makes a ring oscillator."""

    def __init__(self, sim: Simulator, name: str, inp: Wire, out: Wire):
        self.name = name
        self.inp = inp
        self.out = out
        inp.listeners.append(self._on_input)

    def _on_input(self, wire):
        self.out.drive(not wire.level)

    def kick(self):
        """Inject the initial transition that starts the loop."""
        self.out.drive(not self.inp.level)


def latch_step(enable: bool, data_in: int, stored: int) -> int:
    """Transparent latch: pass data while enabled, hold otherwise."""
    return data_in if enable else stored


# --------------------------------------------------------------------------
# Matched delay
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchedDelay:
    """Request-path delay element sized against the data path.

    Construction fails if the delay does not cover the declared worst-case
    data-path delay; that is the bundling hazard this element exists to
    prevent.
    """

    delay: int
    worst_case: int

    def __post_init__(self):
        if self.delay < self.worst_case:
            raise DelayUnderMatch(
                f"matched delay {self.delay} ps < data-path worst case "
                f"{self.worst_case} ps"
            )


def matched_delay(req_event, function_block_delay: int):
    """Shift a request event past the function block's completion."""
    return req_event._replace(time=req_event.time + function_block_delay)


# --------------------------------------------------------------------------
# Pure handshake step functions
# --------------------------------------------------------------------------


class FourPhasePhase(Enum):
    IDLE = "Idle"
    DATA_VALID = "DataValid"
    REQ_HIGH = "ReqHigh"
    SAW_ACK_HIGH = "SawAckHigh"
    REQ_LOW = "ReqLow"
    SAW_ACK_LOW = "SawAckLow"


class FourPhaseRecvPhase(Enum):
    IDLE = "Idle"
    ACK_HIGH = "AckHigh"


# Wire actions returned by the step functions.
DRIVE_DATA = "drive_data"
RAISE_REQ = "raise_req"
LOWER_REQ = "lower_req"
RAISE_ACK = "raise_ack"
LOWER_ACK = "lower_ack"
LATCH = "latch"
TOGGLE_REQ = "toggle_req"
TOGGLE_ACK = "toggle_ack"


def four_phase_sender_step(
    phase: FourPhasePhase, ack_level: bool, data_ready: bool
) -> tuple[FourPhasePhase, list[str]]:
    """Advance the return-to-zero sender one observation.

    The cycle walks Idle -> (data out, request up) -> request down on the
    acknowledge rising -> Idle on the acknowledge falling, at which point
    a new communication may begin.
    """
    if phase is FourPhasePhase.IDLE:
        if ack_level:
            raise ProtocolViolation("ack high while sender idle")
        if data_ready:
            return FourPhasePhase.REQ_HIGH, [DRIVE_DATA, RAISE_REQ]
        return phase, []
    if phase is FourPhasePhase.DATA_VALID:
        if ack_level:
            raise ProtocolViolation("ack high before request rose")
        return FourPhasePhase.REQ_HIGH, [RAISE_REQ]
    if phase in (FourPhasePhase.REQ_HIGH, FourPhasePhase.SAW_ACK_HIGH):
        if ack_level:
            return FourPhasePhase.REQ_LOW, [LOWER_REQ]
        return phase, []
    # REQ_LOW / SAW_ACK_LOW: waiting for the acknowledge to retract
    if not ack_level:
        return FourPhasePhase.IDLE, []
    return phase, []


def four_phase_receiver_step(
    phase: FourPhaseRecvPhase, req_level: bool, can_accept: bool
) -> tuple[FourPhaseRecvPhase, list[str], bool]:
    """Advance the return-to-zero receiver; returns (phase, actions, latched)."""
    if phase is FourPhaseRecvPhase.IDLE:
        if req_level and can_accept:
            return FourPhaseRecvPhase.ACK_HIGH, [LATCH, RAISE_ACK], True
        return phase, [], False
    # ACK_HIGH
    if not req_level:
        return FourPhaseRecvPhase.IDLE, [LOWER_ACK], False
    return phase, [], False


@dataclass(frozen=True)
class TwoPhaseEndpointState:
    """Parity bookkeeping for one transition-signalling endpoint.

    For a sender, `pending` means a request toggle is outstanding. Each
    data item corresponds to exactly one request toggle and one
    acknowledge toggle; there are no return-to-zero phases.
    """

    req_parity: bool = False
    ack_parity: bool = False
    pending: bool = False


def two_phase_sender_step(
    state: TwoPhaseEndpointState, ack_toggled: bool, data_ready: bool
) -> tuple[TwoPhaseEndpointState, list[str]]:
    """Advance a two-phase sender on an acknowledge edge or a send offer."""
    if ack_toggled:
        if not state.pending:
            raise ProtocolViolation("ack toggled with no request outstanding")
        state = replace(state, ack_parity=not state.ack_parity, pending=False)
    if data_ready:
        if state.pending:
            raise ProtocolViolation(
                "request toggled twice without an intervening ack toggle"
            )
        state = replace(state, req_parity=not state.req_parity, pending=True)
        return state, [DRIVE_DATA, TOGGLE_REQ]
    return state, []


def two_phase_receiver_step(
    state: TwoPhaseEndpointState, req_toggled: bool, can_accept: bool
) -> tuple[TwoPhaseEndpointState, list[str], bool]:
    """Advance a two-phase receiver; latches once per request toggle."""
    if req_toggled:
        if state.pending:
            raise ProtocolViolation(
                "request toggled twice without an intervening ack toggle"
            )
        state = replace(state, req_parity=not state.req_parity, pending=True)
    if state.pending and can_accept:
        state = replace(state, ack_parity=not state.ack_parity, pending=False)
        return state, [LATCH, TOGGLE_ACK], True
    return state, [], False


def two_phase_step(
    endpoint: TwoPhaseEndpointState, peer_toggle_observed: bool, *, sender: bool
) -> tuple[TwoPhaseEndpointState, list[str]]:
    """Role-dispatching convenience over the two pure step functions."""
    if sender:
        return two_phase_sender_step(endpoint, peer_toggle_observed, False)
    state, actions, _ = two_phase_receiver_step(endpoint, peer_toggle_observed, True)
    return state, actions


# --------------------------------------------------------------------------
# Mutual exclusion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MutexState:
    """Two-way arbiter state; grants alternate under sustained contention."""

    req_a: bool = False
    req_b: bool = False
    grant: Optional[str] = None  # "A" | "B" | None
    last_granted: Optional[str] = None


def mutex_grant(
    state: MutexState, req_a: bool, req_b: bool
) -> tuple[MutexState, Optional[str]]:
    """Resolve one arbitration round; at most one grant, released on request fall."""
    grant = state.grant
    if grant == "A" and not req_a:
        grant = None
    if grant == "B" and not req_b:
        grant = None
    if grant is None:
        if req_a and req_b:
            grant = "B" if state.last_granted == "A" else "A"
        elif req_a:
            grant = "A"
        elif req_b:
            grant = "B"
    last = grant if grant is not None else state.last_granted
    return MutexState(req_a, req_b, grant, last), grant


class RoundRobinArbiter:
    """N-way generalization of the mutex for router output ports."""

    _state_attrs = ("last",)

    def __init__(self, n: int):
        self.n = n
        self.last = n - 1

    def pick(self, requests: list[bool]) -> Optional[int]:
        for k in range(1, self.n + 1):
            i = (self.last + k) % self.n
            if requests[i]:
                self.last = i
                return i
        return None


# --------------------------------------------------------------------------
# Handshake channel (event-driven)
# --------------------------------------------------------------------------


def _required_matched_delay(delay: DelayModel, setup_margin: int) -> int:
    """Smallest request delay that clears the data path with margin.

    The request edge travels matched_delay plus a wire delay no smaller
    than the model's lower bound; every data bit lands within the model's
    upper bound. Strict clearance needs one extra picosecond beyond the
    inclusive setup window.
    """
    lo, hi = delay.bounds()
    return hi - lo + setup_margin + 1


class Channel:
    """req/ack/data wires plus one sender and one receiver endpoint.

    The data bus is W individual wires bundled with the request; the
    request edge is delayed by the stage's matched delay so data settles
    before the receiver latches. Construction rejects an under-matched
    delay unless `allow_undermatched` is set for hazard experiments.
    """

    def __init__(
        self,
        sim: Simulator,
        name: str,
        width: int,
        protocol: str,
        delay: DelayModel,
        setup_margin: int = 10,
        matched_delay_ps: Optional[int] = None,
        allow_undermatched: bool = False,
    ):
        if protocol not in (FOUR_PHASE, TWO_PHASE):
            raise ValueError(f"unknown protocol {protocol!r}")
        required = _required_matched_delay(delay, setup_margin)
        if matched_delay_ps is None:
            matched_delay_ps = required
        elif matched_delay_ps < required and not allow_undermatched:
            raise DelayUnderMatch(
                f"{name}: matched delay {matched_delay_ps} ps < required "
                f"{required} ps for this delay model and margin"
            )
        self.sim = sim
        self.name = name
        self.width = width
        self.protocol = protocol
        self.setup_margin = setup_margin
        self.matched_delay_ps = matched_delay_ps
        # Whether the matched delay provably covers the data path; an
        # under-matched channel's request races its data bits.
        self.bundling_sound = matched_delay_ps >= required
        self.req = Wire(sim, f"{name}.req", WIRE_HANDSHAKE, delay)
        self.ack = Wire(sim, f"{name}.ack", WIRE_HANDSHAKE, delay)
        self.data = [
            Wire(sim, f"{name}.d{i}", WIRE_DATA, delay) for i in range(width)
        ]
        # With a sound matched delay the request trails every data bit, so
        # data-bit arrival order is unobservable and exploration may
        # collapse it; an under-matched channel's races must be explored.
        for w in self.data:
            w.oracle_eager = self.bundling_sound
        # (req_edge_time, latch_time) per completed latch, for the
        # bundling checker.
        self.latch_windows: list[tuple[int, int]] = []
        if protocol == FOUR_PHASE:
            self.sender = _FourPhaseSender(self)
            self.receiver = _FourPhaseReceiver(self)
        else:
            self.sender = _TwoPhaseSender(self)
            self.receiver = _TwoPhaseReceiver(self)

    def read_bus(self) -> int:
        word = 0
        for i, w in enumerate(self.data):
            if w.level:
                word |= 1 << i
        return word


class _SenderBase:
    """Shared data-drive logic for both protocols."""

    def __init__(self, channel: Channel):
        self.ch = channel
        self.name = f"{channel.name}.tx"
        # Called (synchronously) whenever the channel becomes free again.
        self.on_ready: Optional[Callable] = None
        self.sends = 0
        channel.ack.listeners.append(self._on_ack_edge)

    def _drive_word(self, word: int):
        ch = self.ch
        handles = []
        for i, w in enumerate(ch.data):
            bit = bool((word >> i) & 1)
            if w.level != bit:
                handles.append(w.drive(bit))
        return handles

    def _notify_ready(self):
        if self.on_ready is not None:
            self.on_ready()


class _FourPhaseSender(_SenderBase):
    _state_attrs = ("phase", "sends")

    def __init__(self, channel: Channel):
        super().__init__(channel)
        self.phase = FourPhasePhase.IDLE
        channel.req.listeners.append(self._on_req_edge)

    @property
    def idle(self) -> bool:
        return self.phase is FourPhasePhase.IDLE

    def send(self, word: int):
        if not self.idle:
            raise ProtocolViolation(f"{self.name}: send while busy")
        self.phase, actions = four_phase_sender_step(
            self.phase, self.ch.ack.level, True
        )
        handles = self._drive_word(word)
        # Request rises only after the matched delay covers the data path.
        self.ch.req.drive(
            True,
            extra_delay=self.ch.matched_delay_ps,
            after=handles if self.ch.bundling_sound else None,
        )
        self.phase = FourPhasePhase.DATA_VALID
        self.sends += 1

    def _on_req_edge(self, wire):
        if wire.level and self.phase is FourPhasePhase.DATA_VALID:
            self.phase = FourPhasePhase.REQ_HIGH

    def _on_ack_edge(self, wire):
        if wire.level:
            if self.phase not in (FourPhasePhase.REQ_HIGH, FourPhasePhase.DATA_VALID):
                raise ProtocolViolation(f"{self.name}: unexpected ack rise")
            self.phase = FourPhasePhase.SAW_ACK_HIGH
            self.phase, actions = four_phase_sender_step(self.phase, True, False)
            assert actions == [LOWER_REQ]
            self.ch.req.drive(False, extra_delay=self.ch.matched_delay_ps)
        else:
            if self.phase is not FourPhasePhase.REQ_LOW:
                raise ProtocolViolation(f"{self.name}: unexpected ack fall")
            self.phase = FourPhasePhase.SAW_ACK_LOW
            self.phase, _ = four_phase_sender_step(self.phase, False, False)
            self._notify_ready()


class _FourPhaseReceiver:
    _state_attrs = ("phase", "pending_req_time", "latches")

    def __init__(self, channel: Channel):
        self.ch = channel
        self.name = f"{channel.name}.rx"
        self.phase = FourPhaseRecvPhase.IDLE
        # on_deliver(word) -> bool: False applies backpressure; the word is
        # re-offered when release() is called.
        self.on_deliver: Optional[Callable] = None
        self.pending_req_time: Optional[int] = None
        self.latches = 0
        channel.req.listeners.append(self._on_req_edge)

    def _try_latch(self, req_time: int):
        word = self.ch.read_bus()
        accepted = True if self.on_deliver is None else self.on_deliver(word)
        if not accepted:
            self.pending_req_time = req_time
            return
        note = self.ch.sim.note_latch
        if note is not None:
            note(self.ch)
        self.pending_req_time = None
        if self.ch.sim.schedule_wire is None:
            self.ch.latch_windows.append((req_time, self.ch.sim.now))
        self.latches += 1
        self.phase, actions, latched = four_phase_receiver_step(
            FourPhaseRecvPhase.IDLE, True, True
        )
        assert latched and actions == [LATCH, RAISE_ACK]
        self.ch.ack.drive(True)

    def _on_req_edge(self, wire):
        if wire.level:
            if self.phase is not FourPhaseRecvPhase.IDLE:
                raise ProtocolViolation(f"{self.name}: req rose while ack high")
            self._try_latch(self.ch.sim.now)
        else:
            if self.phase is FourPhaseRecvPhase.IDLE:
                # req withdrawn before we accepted (cannot happen with a
                # conforming sender; tolerate for fault experiments)
                self.pending_req_time = None
                return
            self.phase, actions, _ = four_phase_receiver_step(self.phase, False, True)
            assert actions == [LOWER_ACK]
            self.ch.ack.drive(False)

    def release(self):
        """Backpressure lifted: accept a request that was held off."""
        if self.pending_req_time is not None and self.ch.req.level:
            self._try_latch(self.pending_req_time)


class _TwoPhaseSender(_SenderBase):
    _state_attrs = ("state", "sends")

    def __init__(self, channel: Channel):
        super().__init__(channel)
        self.state = TwoPhaseEndpointState()

    @property
    def idle(self) -> bool:
        return not self.state.pending

    def send(self, word: int):
        self.state, actions = two_phase_sender_step(self.state, False, True)
        assert actions == [DRIVE_DATA, TOGGLE_REQ]
        handles = self._drive_word(word)
        self.ch.req.drive(
            self.state.req_parity,
            extra_delay=self.ch.matched_delay_ps,
            after=handles if self.ch.bundling_sound else None,
        )
        self.sends += 1

    def _on_ack_edge(self, wire):
        self.state, _ = two_phase_sender_step(self.state, True, False)
        self._notify_ready()


class _TwoPhaseReceiver:
    _state_attrs = ("state", "pending_req_time", "latches")

    def __init__(self, channel: Channel):
        self.ch = channel
        self.name = f"{channel.name}.rx"
        self.state = TwoPhaseEndpointState()
        self.on_deliver: Optional[Callable] = None
        self.pending_req_time: Optional[int] = None
        self.latches = 0
        channel.req.listeners.append(self._on_req_edge)

    def _try_latch(self, req_time: int):
        word = self.ch.read_bus()
        accepted = True if self.on_deliver is None else self.on_deliver(word)
        if not accepted:
            self.pending_req_time = req_time
            return
        note = self.ch.sim.note_latch
        if note is not None:
            note(self.ch)
        self.pending_req_time = None
        if self.ch.sim.schedule_wire is None:
            self.ch.latch_windows.append((req_time, self.ch.sim.now))
        self.latches += 1
        self.state, actions, latched = two_phase_receiver_step(self.state, True, True)
        assert latched
        self.ch.ack.drive(self.state.ack_parity)

    def _on_req_edge(self, wire):
        if self.state.pending or self.pending_req_time is not None:
            raise ProtocolViolation(f"{self.name}: req toggled twice unacknowledged")
        self._try_latch(self.ch.sim.now)

    def release(self):
        if self.pending_req_time is not None:
            self._try_latch(self.pending_req_time)


# --------------------------------------------------------------------------
# Bundling checker
# --------------------------------------------------------------------------


def bundling_check(
    data_transitions: list[tuple[str, int]],
    latch_windows: list[tuple[int, int]],
    setup_margin: int,
) -> list[tuple[str, int]]:
    """Report every data transition inside a latch's setup window.

    A transition at time t violates bundling for a latch with request edge
    r and latch time L when r - setup_margin <= t <= L. The checker only
    records; deliberately under-matched stages stay runnable so hazards
    can be quantified.
    """
    violations = []
    if not latch_windows:
        return violations
    windows = sorted((r - setup_margin, latch_t) for r, latch_t in latch_windows)
    for wire_name, t in data_transitions:
        for lo, hi in windows:
            if t > hi:
                continue
            if t < lo:
                break
            violations.append((wire_name, t))
            break
    return violations


def check_channel_bundling(channel: Channel, ledger) -> list[tuple[str, int]]:
    """Run the bundling checker over a channel's recorded activity."""
    transitions = []
    for w in channel.data:
        for t in ledger.times_for(w.ledger_idx):
            transitions.append((w.name, t))
    return bundling_check(transitions, channel.latch_windows, channel.setup_margin)


# --------------------------------------------------------------------------
# Pipeline composition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StageSpec:
    """Descriptor for one pipeline stage."""

    name: str
    width: int
    func: Optional[Callable] = None  # word -> word; identity if None
    protocol: Optional[str] = None  # inherit the pipeline protocol if None


class PipelineSource:
    """Feeds a queue of words into the first channel."""

    _state_attrs = ("queue", "sent")

    def __init__(self, channel: Channel):
        self.name = f"{channel.name}.src"
        self.ch = channel
        self.queue: list[int] = []
        self.sent = 0
        channel.sender.on_ready = self._pump

    def feed(self, words):
        self.queue.extend(words)

    def start(self):
        self.ch.sim.after(1, self.poke, None)

    def poke(self, _arg):
        self._pump()

    def _pump(self):
        if self.queue and self.ch.sender.idle:
            word = self.queue.pop(0)
            self.sent += 1
            self.ch.sender.send(word)


class PipelineStage:
    """One-place stage: latch in, transform, hand on."""

    _state_attrs = ("holding",)

    def __init__(self, spec: StageSpec, inp: Channel, out: Channel):
        self.name = spec.name
        self.func = spec.func
        self.inp = inp
        self.out = out
        self.holding: Optional[int] = None
        inp.receiver.on_deliver = self._accept
        out.sender.on_ready = self._forward

    def _accept(self, word: int) -> bool:
        if self.holding is not None:
            return False
        self.holding = word if self.func is None else self.func(word)
        # Forward immediately if the output is free; the output channel's
        # matched delay stands in for the stage's function-block delay.
        self._forward()
        return True

    def _forward(self):
        if self.holding is not None and self.out.sender.idle:
            word = self.holding
            self.holding = None
            self.out.sender.send(word)
            self.inp.receiver.release()


class PipelineSink:
    """Collects (word, time) at the pipeline tail."""

    _state_attrs = ("received",)

    def __init__(self, channel: Channel):
        self.name = f"{channel.name}.sink"
        self.ch = channel
        self.received: list[tuple[int, int]] = []
        channel.receiver.on_deliver = self._accept

    def _accept(self, word: int) -> bool:
        self.received.append((word, self.ch.sim.now))
        return True


@dataclass
class Pipeline:
    source: PipelineSource
    stages: list[PipelineStage]
    sink: PipelineSink
    channels: list[Channel]


def compose_pipeline(
    sim: Simulator,
    stages: list[StageSpec],
    protocol: str,
    delay: DelayModel,
    setup_margin: int = 10,
    matched_delay_ps: Optional[int] = None,
    allow_undermatched: bool = False,
) -> Pipeline:
    """Chain stages into a runnable circuit, channel between each pair.

    Adjacent stages must agree on data width and protocol; disagreement is
    an InterfaceMismatch at composition time, before anything runs.
    """
    if not stages:
        raise InterfaceMismatch("pipeline needs at least one stage")
    for a, b in zip(stages, stages[1:]):
        if a.width != b.width:
            raise InterfaceMismatch(
                f"stage {a.name!r} width {a.width} feeds stage {b.name!r} "
                f"width {b.width}"
            )
    for s in stages:
        if s.protocol is not None and s.protocol != protocol:
            raise InterfaceMismatch(
                f"stage {s.name!r} speaks {s.protocol}, pipeline uses {protocol}"
            )
    width = stages[0].width
    channels = [
        Channel(
            sim,
            f"pipe.ch{i}",
            width,
            protocol,
            delay,
            setup_margin,
            matched_delay_ps,
            allow_undermatched,
        )
        for i in range(len(stages) + 1)
    ]
    built = [
        PipelineStage(spec, channels[i], channels[i + 1])
        for i, spec in enumerate(stages)
    ]
    return Pipeline(
        source=PipelineSource(channels[0]),
        stages=built,
        sink=PipelineSink(channels[-1]),
        channels=channels,
    )
