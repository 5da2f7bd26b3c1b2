"""Clocked counterpart of the handshake fabric.

The same mesh routing function driven by a global clock distributed
through a skewed binary H-tree. Register moves happen one hop per cycle;
every clock wire toggles twice per period whether or not any data moved,
which is exactly the idle-power and emission contrast the asynchronous
fabric is measured against. Setup/hold checking over the skew map gives
the scaling argument a number.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codec import Coord, ImpedanceCode, Opcode, Packet
from .fabric import DestOutOfRange, Port, route_port
from .metrics import ClockBlock, TransitionLedger
from .primitives import WIRE_DATA

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + _SPLITMIX_GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _edge_sign(seed: int, x0: int, y0: int, w: int, h: int) -> int:
    """Deterministic +-1 for one tree edge, keyed by its child block.

    Keying by block geometry (not by tree depth) makes the sign pattern
    nested: growing the grid never changes the skew difference between two
    nodes that were already present, so timing-violation counts are
    monotone in grid side for a fixed seed.
    """
    h64 = _splitmix64(seed & _MASK64)
    for v in (x0, y0, w, h):
        h64 = _splitmix64(h64 ^ (v & _MASK64))
    return 1 if h64 & 1 else -1


@dataclass(frozen=True)
class TimingParams:
    setup: int
    hold: int
    hop_data_delay: int  # register-to-register path between adjacent nodes

    def __post_init__(self):
        if self.setup <= 0 or self.hold <= 0 or self.hop_data_delay <= 0:
            raise ValueError("timing parameters must be positive")


@dataclass
class ClockTree:
    """Binary H-tree over the grid with per-level signed skew.

    Each split contributes +-(skew_per_level * span) to the subtree below
    it, where span is half the split dimension in atom pitches -- longer
    tree arms accumulate proportionally more skew, so the worst pairwise
    skew grows with the physical side of the tile rather than only with
    the logarithmic tree depth. `wire_offsets` carries the accumulated
    offset of every tree wire (internal nodes plus leaves: 2N-1 wires for
    N atoms), used for the clock energy/emission ledger.
    """

    width: int
    height: int
    period: int
    skew_per_level: int
    seed: int
    levels: int
    leaf_skews: np.ndarray  # (height, width) int64
    wire_offsets: np.ndarray  # int64, one per clock tree wire
    max_abs_skew: int

    @property
    def n_wires(self) -> int:
        return int(self.wire_offsets.shape[0])

    def skew_of(self, coord: Coord) -> int:
        return int(self.leaf_skews[coord.y, coord.x])


def build_clock_tree(
    width: int,
    height: int,
    period: int,
    skew_per_level: int,
    seed: int = 0,
) -> ClockTree:
    """Deterministically synthesize the skew map for a W x H grid."""
    if period <= 0:
        raise ValueError("period must be positive")
    if width < 1 or height < 1:
        raise ValueError("grid must be at least 1x1")
    if skew_per_level < 0:
        raise ValueError("skew_per_level must be >= 0")
    side = 1
    levels = 0
    while side < max(width, height):
        side *= 2
        levels += 2  # one x split and one y split per doubling
    leaf = np.zeros((height, width), dtype=np.int64)
    offsets: list[int] = []
    max_path = 0

    # Iterative recursion over blocks of the virtual 2^k square, pruned to
    # blocks that intersect the real grid.
    stack = [(0, 0, side, side, 0, 0)]  # x0, y0, w, h, acc, span_sum
    while stack:
        x0, y0, w, h, acc, span_sum = stack.pop()
        if x0 >= width or y0 >= height:
            continue
        offsets.append(acc)
        if w == 1 and h == 1:
            leaf[y0, x0] = acc
            max_path = max(max_path, span_sum)
            continue
        if w >= h:
            span = w // 2
            children = ((x0, y0, span, h), (x0 + span, y0, w - span, h))
        else:
            span = h // 2
            children = ((x0, y0, w, span), (x0, y0 + span, w, h - span))
        for cx, cy, cw, chh in children:
            sign = _edge_sign(seed, cx, cy, cw, chh)
            stack.append(
                (cx, cy, cw, chh, acc + sign * span * skew_per_level, span_sum + span)
            )

    tree = ClockTree(
        width=width,
        height=height,
        period=period,
        skew_per_level=skew_per_level,
        seed=seed,
        levels=levels,
        leaf_skews=leaf,
        wire_offsets=np.asarray(offsets, dtype=np.int64),
        max_abs_skew=max_path * skew_per_level,
    )
    assert int(np.abs(leaf).max(initial=0)) <= tree.max_abs_skew
    return tree


@dataclass(frozen=True)
class TimingViolation:
    src: Coord
    dst: Coord
    kind: str  # "setup" | "hold"
    margin: int  # negative slack, in ps


def check_timing(tree: ClockTree, params: TimingParams) -> list[TimingViolation]:
    """Setup/hold check over every directed adjacent node pair.

    With skew difference d = skew(dst) - skew(src): a setup violation is
    hop_delay + setup > period + d; a hold violation is
    hop_delay < hold + d.
    """
    s = tree.leaf_skews
    out: list[TimingViolation] = []

    def scan(src_xy, dst_xy, d):
        setup_slack = tree.period + d - params.hop_data_delay - params.setup
        hold_slack = params.hop_data_delay - params.hold - d
        for kind, slack in (("setup", setup_slack), ("hold", hold_slack)):
            bad = np.nonzero(slack < 0)
            for yy, xx in zip(*bad):
                out.append(
                    TimingViolation(
                        src=Coord(int(src_xy[1][yy, xx]), int(src_xy[0][yy, xx])),
                        dst=Coord(int(dst_xy[1][yy, xx]), int(dst_xy[0][yy, xx])),
                        kind=kind,
                        margin=int(slack[yy, xx]),
                    )
                )

    ys, xs = np.mgrid[0 : tree.height, 0 : tree.width]
    if tree.width > 1:
        d = s[:, 1:] - s[:, :-1]  # west -> east
        scan((ys[:, :-1], xs[:, :-1]), (ys[:, 1:], xs[:, 1:]), d)
        scan((ys[:, 1:], xs[:, 1:]), (ys[:, :-1], xs[:, :-1]), -d)
    if tree.height > 1:
        d = s[1:, :] - s[:-1, :]  # south -> north
        scan((ys[:-1, :], xs[:-1, :]), (ys[1:, :], xs[1:, :]), d)
        scan((ys[1:, :], xs[1:, :]), (ys[:-1, :], xs[:-1, :]), -d)
    return out


# --------------------------------------------------------------------------
# Cycle-accurate clocked grid
# --------------------------------------------------------------------------

_IN_PORTS = (Port.WEST, Port.EAST, Port.NORTH, Port.SOUTH)


class _SyncNode:
    __slots__ = ("coord", "registers", "buffers", "buffer_bits", "rr", "reg_wire")

    def __init__(self, coord: Coord, loads: int, reg_wire: int):
        self.coord = coord
        self.registers = [ImpedanceCode(0, 0) for _ in range(loads)]
        # One packet register per input direction (+ gateway at the corner).
        self.buffers: dict[Port, Optional[Packet]] = {p: None for p in _IN_PORTS}
        self.buffer_bits: dict[Port, int] = {p: 0 for p in _IN_PORTS}
        self.rr = 0  # round-robin pointer over input ports
        self.reg_wire = reg_wire


class SyncGrid:
    """The clocked fabric: identical routing function, global clock.

    Addresses are fixed at construction (a clocked design has no
    handshake discovery). SET_IMPEDANCE workloads only, which is what the
    register-state equivalence comparison is defined over.
    """

    def __init__(
        self,
        width: int,
        height: int,
        tree: ClockTree,
        *,
        loads_per_node: int = 4,
        ledger: Optional[TransitionLedger] = None,
    ):
        if tree.width != width or tree.height != height:
            raise ValueError("clock tree does not match grid dimensions")
        if tree.max_abs_skew >= tree.period:
            raise ValueError("skew exceeds a full period; clocking is meaningless")
        self.width = width
        self.height = height
        self.tree = tree
        self.ledger = ledger if ledger is not None else TransitionLedger()
        self.nodes: dict[Coord, _SyncNode] = {}
        for x in range(width):
            for y in range(height):
                c = Coord(x, y)
                wire = self.ledger.register_wire(f"sync.node{x}_{y}.regs", WIRE_DATA)
                self.nodes[c] = _SyncNode(c, loads_per_node, wire)
        self.pending: list[tuple[int, int, Packet]] = []  # (time, order, pkt)
        self._order = 0
        self.injected: list[tuple[Packet, int]] = []
        self.deliveries: list[tuple[Packet, int]] = []
        self.cycles_run = 0
        self.in_flight = 0

    def inject_at(self, time: int, pkt: Packet):
        if pkt.opcode != Opcode.SET_IMPEDANCE:
            raise ValueError("the clocked baseline runs SET_IMPEDANCE workloads")
        if pkt.dest.x >= self.width or pkt.dest.y >= self.height:
            raise DestOutOfRange(f"dest {pkt.dest} outside {self.width}x{self.height}")
        heapq.heappush(self.pending, (time, self._order, pkt))
        self._order += 1

    def _edge_time(self, coord: Coord, cycle: int) -> int:
        return cycle * self.tree.period + self.tree.skew_of(coord)

    def _log_move(self, node: _SyncNode, port: Port, pkt: Optional[Packet], cycle: int):
        old = node.buffer_bits[port]
        new = (pkt.bits() << 1) | 1 if pkt is not None else old & ~1
        flips = (old ^ new).bit_count()
        node.buffer_bits[port] = new
        if flips:
            self.ledger.log(node.reg_wire, self._edge_time(node.coord, cycle), flips)

    def step(self, cycle: int) -> bool:
        """One global clock edge: every register updates simultaneously.

        Moves are computed from cycle-start state and committed together,
        so a vacated buffer only becomes usable on the next cycle. Returns
        whether any register changed.
        """
        moves: list[tuple[_SyncNode, Port, _SyncNode, Port, Packet]] = []
        consumes: list[tuple[_SyncNode, Port, Packet]] = []
        claimed: set[tuple[Coord, Port]] = set()

        # Gateway feed into the corner's west register.
        corner = self.nodes[Coord(0, 0)]
        edge_t = self._edge_time(corner.coord, cycle)
        inject: Optional[Packet] = None
        if (
            self.pending
            and self.pending[0][0] <= edge_t
            and corner.buffers[Port.WEST] is None
        ):
            inject = heapq.heappop(self.pending)[2]
            claimed.add((corner.coord, Port.WEST))

        for coord in sorted(self.nodes):
            node = self.nodes[coord]
            n_ports = len(_IN_PORTS)
            start = node.rr
            node.rr = (start + 1) % n_ports  # rotate claim priority per cycle
            for k in range(n_ports):
                port = _IN_PORTS[(start + k) % n_ports]
                pkt = node.buffers[port]
                if pkt is None:
                    continue
                out = route_port(coord, pkt.dest)
                if out is Port.LOCAL:
                    consumes.append((node, port, pkt))
                    continue
                dx, dy = {
                    Port.EAST: (1, 0),
                    Port.WEST: (-1, 0),
                    Port.NORTH: (0, 1),
                    Port.SOUTH: (0, -1),
                }[out]
                nc = Coord(coord.x + dx, coord.y + dy)
                peer = self.nodes[nc]
                in_port = {
                    Port.EAST: Port.WEST,
                    Port.WEST: Port.EAST,
                    Port.NORTH: Port.SOUTH,
                    Port.SOUTH: Port.NORTH,
                }[out]
                if peer.buffers[in_port] is not None or (nc, in_port) in claimed:
                    continue
                claimed.add((nc, in_port))
                moves.append((node, port, peer, in_port, pkt))

        for node, port, peer, in_port, pkt in moves:
            node.buffers[port] = None
            self._log_move(node, port, None, cycle)
            peer.buffers[in_port] = pkt
            self._log_move(peer, in_port, pkt, cycle)
        for node, port, pkt in consumes:
            node.buffers[port] = None
            self._log_move(node, port, None, cycle)
            old = node.registers[pkt.load_index]
            new = ImpedanceCode.from_payload(pkt.payload)
            flips = (old.as_payload() ^ new.as_payload()).bit_count()
            node.registers[pkt.load_index] = new
            t = self._edge_time(node.coord, cycle)
            if flips:
                self.ledger.log(node.reg_wire, t, flips)
            self.deliveries.append((pkt, t))
            self.in_flight -= 1
        if inject is not None:
            corner.buffers[Port.WEST] = inject
            self._log_move(corner, Port.WEST, inject, cycle)
            self.injected.append((inject, edge_t))
            self.in_flight += 1
        return bool(moves or consumes or inject is not None)

    def run(self, commands: list[tuple[int, Packet]], duration_ps: int = 0):
        """Inject commands, clock until idle and past duration_ps.

        The clock block appended to the ledger covers every period from
        cycle 1 through the later of the observation window and the last
        active cycle; empty cycles are skipped by the movement loop but
        still burn clock transitions.
        """
        for t, pkt in commands:
            self.inject_at(t, pkt)
        min_cycles = -(-duration_ps // self.tree.period) if duration_ps else 0
        corner_skew = self.tree.skew_of(Coord(0, 0))
        cycle = 1
        last_active = 0
        while self.in_flight or self.pending:
            if self.in_flight == 0:
                # Nothing moving: jump to the first edge that can inject.
                t_next = self.pending[0][0]
                cycle = max(cycle, -(-(t_next - corner_skew) // self.tree.period))
            if self.step(cycle):
                last_active = cycle
            cycle += 1
        total_cycles = max(min_cycles, last_active)
        self.cycles_run = total_cycles
        if total_cycles:
            self.ledger.add_clock_block(
                ClockBlock(
                    offsets=self.tree.wire_offsets,
                    base=self.tree.period,
                    period=self.tree.period,
                    cycles=total_cycles,
                )
            )

    def register_state(self) -> dict[Coord, tuple]:
        return {c: tuple(n.registers) for c, n in self.nodes.items()}
