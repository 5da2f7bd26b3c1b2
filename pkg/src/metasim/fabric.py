"""Mesh control fabric: router nodes, gateway, and address discovery.

A W x H grid of identical router nodes is linked by handshake channels
(a channel pair per adjacent node pair). A single gateway hangs off the
west side of the corner node (0,0), injecting commands and collecting
reports and announcements. Every node runs the same logic; edges behave
differently only because neighbor channels are absent there.

Packets travel one bus word per handshake. Routing is XY dimension-order
(east/west before north/south), which is deadlock-free on a mesh with
single-packet port buffers and backpressure instead of drops.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

from .codec import (
    Coord,
    ImpedanceCode,
    Opcode,
    Packet,
    decode_packet,
    encode_packet,
    packet_words,
)
from .kernel import DelayModel, SimError, Simulator
from .primitives import Channel, RoundRobinArbiter

DEFAULT_LOADS_PER_NODE = 4
DEFAULT_BUS_WIDTH = 16
DEFAULT_NODE_DELAY = 20  # ps, routing-decision latency per packet hop


class FabricError(SimError):
    pass


class BadLoadIndex(FabricError):
    """SET_IMPEDANCE addressed a load slot the node does not have."""


class DiscoveryIncomplete(FabricError):
    """Discovery reached quiescence with unannounced nodes."""

    def __init__(self, missing):
        super().__init__(f"{len(missing)} node(s) never announced: {sorted(missing)}")
        self.missing = missing


class DestOutOfRange(FabricError):
    """A command addresses a coordinate outside the learned extent."""


class Port(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    LOCAL = 4


_DELTAS = {
    Port.NORTH: (0, 1),
    Port.EAST: (1, 0),
    Port.SOUTH: (0, -1),
    Port.WEST: (-1, 0),
}
_NEIGHBOR_PORTS = (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST)


def route_port(here: Coord, dest: Coord) -> Port:
    """XY dimension-order routing: fix x fully, then y, then deliver."""
    if dest.x > here.x:
        return Port.EAST
    if dest.x < here.x:
        return Port.WEST
    if dest.y > here.y:
        return Port.NORTH
    if dest.y < here.y:
        return Port.SOUTH
    return Port.LOCAL


# --------------------------------------------------------------------------
# Word-level packet framing over a channel
# --------------------------------------------------------------------------


class PacketSerializer:
    """Sends packets one bus word at a time over a channel."""

    _state_attrs = ("words", "i", "busy")

    def __init__(self, channel: Channel, bus_width: int, on_done: Callable):
        self.ch = channel
        self.bus_width = bus_width
        self.on_done = on_done
        self.words: list[int] = []
        self.i = 0
        self.busy = False
        channel.sender.on_ready = self._pump

    def start(self, packet: Packet):
        assert not self.busy
        self.words = encode_packet(packet, self.bus_width)
        self.i = 0
        self.busy = True
        self._pump()

    def _pump(self):
        if not self.busy:
            return
        if self.i < len(self.words):
            w = self.words[self.i]
            self.i += 1
            self.ch.sender.send(w)
        else:
            self.busy = False
            self.on_done()


class PacketDeserializer:
    """Reassembles bus words into packets with a one-packet buffer.

    Words of a packet in progress are always accepted; the final word is
    held off (handshake backpressure, never a drop) while the previous
    packet still occupies the buffer.
    """

    _state_attrs = ("staging", "buffer")

    def __init__(self, channel: Channel, bus_width: int, on_full: Callable):
        self.ch = channel
        self.words_per_packet = packet_words(bus_width)
        self.bus_width = bus_width
        self.on_full = on_full
        self.staging: list[int] = []
        self.buffer: Optional[Packet] = None
        channel.receiver.on_deliver = self._word

    def _word(self, word: int) -> bool:
        if len(self.staging) == self.words_per_packet - 1:
            if self.buffer is not None:
                return False
            self.buffer = decode_packet(self.staging + [word], self.bus_width)
            self.staging = []
            self.on_full()
            return True
        self.staging.append(word)
        return True

    def consume(self) -> Packet:
        pkt = self.buffer
        assert pkt is not None
        self.buffer = None
        self.ch.receiver.release()
        return pkt


# --------------------------------------------------------------------------
# Router node
# --------------------------------------------------------------------------


class _OutPort:
    """One output direction: serializer plus request arbitration state."""

    __slots__ = ("serializer", "waiting", "local_queue", "arbiter", "current")
    _state_attrs = ("waiting", "local_queue", "current")

    def __init__(self, serializer: PacketSerializer):
        self.serializer = serializer
        self.waiting = [False] * 4  # per neighbor in-port
        self.local_queue: deque[Packet] = deque()
        self.arbiter = RoundRobinArbiter(5)  # 4 in-ports + local origin
        self.current = None  # ("port", Port) or ("local",) while sending


class MetaAtomNode:
    """One meta-atom controller: impedance registers plus a 5-port router.

    The local port is the node's own packet source and sink (register
    writes, event reports, discovery traffic it originates); the other
    four are handshake channels to neighbors. Identical logic runs at
    every position; the constructor wires up only the channels that
    physically exist.
    """

    _state_attrs = (
        "coord",
        "discovery_parent",
        "registers",
        "audit_log",
        "duplicate_discover_count",
    )

    def __init__(self, grid: "Grid", true_coord: Coord):
        self.grid = grid
        self.sim = grid.sim
        self.true_coord = true_coord  # construction ground truth; not used to route
        self.name = f"node{true_coord.x}_{true_coord.y}"
        self.coord: Optional[Coord] = None
        self.discovery_parent: Optional[Port] = None
        self.registers: list[ImpedanceCode] = [
            ImpedanceCode(0, 0) for _ in range(grid.loads_per_node)
        ]
        self.audit_log: list[tuple[int, Coord, int, ImpedanceCode]] = []
        self.in_deser: dict[Port, PacketDeserializer] = {}
        self.out_ports: dict[Port, _OutPort] = {}
        self.duplicate_discover_count = 0

    # -- wiring ------------------------------------------------------------

    def attach_input(self, port: Port, channel: Channel):
        self.in_deser[port] = PacketDeserializer(
            channel, self.grid.bus_width, lambda p=port: self._on_packet(p)
        )

    def attach_output(self, port: Port, channel: Channel):
        ser = PacketSerializer(
            channel, self.grid.bus_width, lambda p=port: self._on_send_done(p)
        )
        self.out_ports[port] = _OutPort(ser)

    # -- routing -----------------------------------------------------------

    def _on_packet(self, port: Port):
        self.sim.after(self.grid.node_delay, self._route_poke, port)

    def _outbound_port(self, pkt: Packet) -> Port:
        if pkt.dest == self.coord:
            if pkt.opcode in (Opcode.REPORT, Opcode.ANNOUNCE):
                # Reaching the attach corner: hand upstream to the gateway.
                return Port.WEST
            return Port.LOCAL
        if pkt.opcode == Opcode.ANNOUNCE:
            # Announcements climb the discovery spanning tree, which only
            # crosses nodes that already hold an address.
            assert self.discovery_parent is not None
            return self.discovery_parent
        return route_port(self.coord, pkt.dest)

    def _route_poke(self, port: Port):
        des = self.in_deser[port]
        pkt = des.buffer
        assert pkt is not None
        if pkt.opcode == Opcode.DISCOVER:
            des.consume()
            self._handle_discover(port, pkt)
            return
        if self.coord is None:
            raise FabricError(f"{self.name}: routed traffic before discovery")
        out = self._outbound_port(pkt)
        if out is Port.LOCAL:
            des.consume()
            self._deliver_local(pkt)
            return
        op = self.out_ports.get(out)
        if op is None:
            raise FabricError(f"{self.name}: no channel on port {out.name}")
        op.waiting[port] = True
        self._try_grant(out)

    def _deliver_local(self, pkt: Packet):
        if pkt.opcode == Opcode.SET_IMPEDANCE:
            self.apply_config(pkt)
            self.grid.deliveries.append((pkt, self.sim.now))
        else:
            raise FabricError(f"{self.name}: cannot consume {pkt.opcode.name} locally")

    def apply_config(self, pkt: Packet):
        """Write one impedance register; audit every write."""
        if pkt.load_index >= len(self.registers):
            raise BadLoadIndex(
                f"{self.name}: load {pkt.load_index} of {len(self.registers)}"
            )
        code = ImpedanceCode.from_payload(pkt.payload)
        self.registers[pkt.load_index] = code
        self.audit_log.append((self.sim.now, self.coord, pkt.load_index, code))

    # -- discovery ---------------------------------------------------------

    def _handle_discover(self, port: Port, pkt: Packet):
        if self.coord is not None:
            # Duplicate flood arrival: acknowledged at the handshake level,
            # dropped here.
            self.duplicate_discover_count += 1
            return
        self.coord = pkt.dest
        self.discovery_parent = port
        x, y = self.coord.x, self.coord.y
        if Port.EAST in self.out_ports:
            self.emit(
                Port.EAST, Packet(Opcode.DISCOVER, Coord(x + 1, y), self.coord)
            )
        if Port.NORTH in self.out_ports:
            self.emit(
                Port.NORTH, Packet(Opcode.DISCOVER, Coord(x, y + 1), self.coord)
            )
        self.emit(
            self.discovery_parent,
            Packet(Opcode.ANNOUNCE, Coord(0, 0), self.coord),
        )

    def reset_address(self):
        self.coord = None
        self.discovery_parent = None

    # -- local origin ------------------------------------------------------

    def emit(self, out: Port, pkt: Packet):
        """Queue a locally-originated packet on an output port."""
        op = self.out_ports.get(out)
        if op is None:
            raise FabricError(f"{self.name}: no channel on port {out.name}")
        op.local_queue.append(pkt)
        self._try_grant(out)

    def report_event(self, event_code: int):
        """Send an event report toward the gateway."""
        if self.coord is None:
            raise FabricError(f"{self.name}: report before address assignment")
        pkt = Packet(Opcode.REPORT, Coord(0, 0), self.coord, payload=event_code)
        self.grid.report_injections.append((pkt, self.sim.now))
        self.emit(self._outbound_port(pkt), pkt)

    # -- output arbitration --------------------------------------------------

    def _try_grant(self, out: Port):
        op = self.out_ports[out]
        if op.serializer.busy or op.current is not None:
            return
        requests = op.waiting + [bool(op.local_queue)]
        idx = op.arbiter.pick(requests)
        if idx is None:
            return
        if idx == 4:
            pkt = op.local_queue.popleft()
            op.current = ("local",)
        else:
            src = Port(idx)
            op.waiting[idx] = False
            pkt = self.in_deser[src].buffer
            op.current = ("port", src)
        op.serializer.start(pkt)

    def _on_send_done(self, out: Port):
        op = self.out_ports[out]
        current = op.current
        op.current = None
        if current is not None and current[0] == "port":
            self.in_deser[current[1]].consume()
        self._try_grant(out)


# --------------------------------------------------------------------------
# Gateway
# --------------------------------------------------------------------------


class Gateway:
    """Edge bridge between the external controller and the fabric.

    Injects timed commands down its single link into the corner node and
    collects announcements and reports coming back up. Commands whose
    times collide are serialized in submission order.
    """

    _state_attrs = ("pending", "injected", "collected_reports", "announced", "extent")

    def __init__(self, grid: "Grid", downlink: Channel, uplink: Channel):
        self.grid = grid
        self.sim = grid.sim
        self.name = "gateway"
        self.tx = PacketSerializer(downlink, grid.bus_width, self._tx_done)
        self.rx = PacketDeserializer(uplink, grid.bus_width, self._rx_full)
        self.pending: deque[Packet] = deque()
        self.injected: list[tuple[Packet, int]] = []
        self.collected_reports: list[tuple[Coord, int, int]] = []
        self.announced: dict[Coord, int] = {}
        self.extent: Optional[tuple[int, int]] = None

    def start_discovery(self):
        """Seed the flood: the corner node becomes (0,0)."""
        self.pending.append(Packet(Opcode.DISCOVER, Coord(0, 0), Coord(0, 0)))
        self._pump()

    def inject_at(self, time: int, pkt: Packet):
        """Schedule one command to enter the fabric at an absolute time."""
        if self.extent is None:
            raise FabricError("inject before discovery completed")
        w, h = self.extent
        if pkt.dest.x >= w or pkt.dest.y >= h:
            raise DestOutOfRange(f"dest {pkt.dest} outside extent {self.extent}")
        self.sim.at(time, self._inject_poke, pkt)

    def _inject_poke(self, pkt: Packet):
        self.pending.append(pkt)
        self._pump()

    def _pump(self):
        if not self.tx.busy and self.pending:
            pkt = self.pending.popleft()
            if pkt.opcode != Opcode.DISCOVER:
                self.injected.append((pkt, self.sim.now))
            self.tx.start(pkt)

    def _tx_done(self):
        self._pump()

    def _rx_full(self):
        pkt = self.rx.consume()
        if pkt.opcode == Opcode.ANNOUNCE:
            self.announced[pkt.src] = self.announced.get(pkt.src, 0) + 1
        elif pkt.opcode == Opcode.REPORT:
            self.collected_reports.append((pkt.src, pkt.payload, self.sim.now))
            self.grid.deliveries.append((pkt, self.sim.now))
        else:
            raise FabricError(f"gateway received {pkt.opcode.name}")

    def learned_extent(self) -> tuple[int, int]:
        if not self.announced:
            return (0, 0)
        w = max(c.x for c in self.announced) + 1
        h = max(c.y for c in self.announced) + 1
        return (w, h)


# --------------------------------------------------------------------------
# Grid
# --------------------------------------------------------------------------


@dataclass
class DiscoveryResult:
    address_map: dict[Coord, Coord]  # construction coord -> assigned coord
    extent: tuple[int, int]
    announced: int
    events: int
    time: int


class Grid:
    """A W x H tile of router nodes plus its gateway.

    `severed_links` removes both channels between the given construction
    coordinate pairs, for fault-injection experiments.
    """

    _state_attrs = ("deliveries", "report_injections")

    def __init__(
        self,
        sim: Simulator,
        width: int,
        height: int,
        *,
        protocol: str,
        delay: DelayModel,
        bus_width: int = DEFAULT_BUS_WIDTH,
        loads_per_node: int = DEFAULT_LOADS_PER_NODE,
        setup_margin: int = 10,
        node_delay: int = DEFAULT_NODE_DELAY,
        matched_delay_ps: Optional[int] = None,
        allow_undermatched: bool = False,
        severed_links: Optional[set] = None,
    ):
        if width < 1 or height < 1:
            raise ValueError("grid must be at least 1x1")
        self.sim = sim
        self.width = width
        self.height = height
        self.protocol = protocol
        self.bus_width = bus_width
        self.loads_per_node = loads_per_node
        self.node_delay = node_delay
        self.deliveries: list[tuple[Packet, int]] = []
        self.report_injections: list[tuple[Packet, int]] = []
        self.channels: list[Channel] = []
        severed = {frozenset(pair) for pair in (severed_links or set())}

        def make_channel(name: str) -> Channel:
            ch = Channel(
                sim,
                name,
                bus_width,
                protocol,
                delay,
                setup_margin,
                matched_delay_ps,
                allow_undermatched,
            )
            self.channels.append(ch)
            return ch

        self.nodes: dict[Coord, MetaAtomNode] = {
            Coord(x, y): MetaAtomNode(self, Coord(x, y))
            for x in range(width)
            for y in range(height)
        }
        for c, node in self.nodes.items():
            for port in (Port.EAST, Port.NORTH):
                dx, dy = _DELTAS[port]
                nc = Coord(c.x + dx, c.y + dy) if (c.x + dx < width and c.y + dy < height) else None
                if nc is None or frozenset((c, nc)) in severed:
                    continue
                peer = self.nodes[nc]
                back = Port.WEST if port is Port.EAST else Port.SOUTH
                fwd_ch = make_channel(f"{node.name}.{port.name[0]}")
                rev_ch = make_channel(f"{peer.name}.{back.name[0]}")
                node.attach_output(port, fwd_ch)
                peer.attach_input(back, fwd_ch)
                peer.attach_output(back, rev_ch)
                node.attach_input(port, rev_ch)
        corner = self.nodes[Coord(0, 0)]
        downlink = make_channel("gateway.down")
        uplink = make_channel("node0_0.W")
        corner.attach_input(Port.WEST, downlink)
        corner.attach_output(Port.WEST, uplink)
        self.gateway = Gateway(self, downlink, uplink)

    # -- address assignment --------------------------------------------------

    def run_discovery(self, max_events: int = 10_000_000) -> DiscoveryResult:
        """Flood addresses from the gateway corner and wait for quiescence.

        Raises DiscoveryIncomplete if any node never announced (severed or
        unreachable fabric).
        """
        self.gateway.start_discovery()
        time, events = self.sim.run_to_quiescence(max_events)
        missing = {
            c for c, n in self.nodes.items() if n.coord is None
        } | {
            n.true_coord
            for n in self.nodes.values()
            if n.coord is not None and n.coord not in self.gateway.announced
        }
        if missing:
            raise DiscoveryIncomplete(missing)
        self.gateway.extent = self.gateway.learned_extent()
        return DiscoveryResult(
            address_map={n.true_coord: n.coord for n in self.nodes.values()},
            extent=self.gateway.extent,
            announced=len(self.gateway.announced),
            events=events,
            time=time,
        )

    def assign_addresses(self):
        """Skip discovery: configure addresses from construction ground truth.

        Used by workload-focused experiments and by the clocked baseline,
        which has no discovery protocol.
        """
        for c, node in self.nodes.items():
            node.coord = c
            if c.x > 0:
                node.discovery_parent = Port.WEST
            elif c.y > 0:
                node.discovery_parent = Port.SOUTH
            else:
                node.discovery_parent = Port.WEST  # gateway uplink
            self.gateway.announced[c] = 1
        self.gateway.extent = (self.width, self.height)

    def reset_addresses(self):
        """Forget all assignments so discovery can run again (quiescent only)."""
        for node in self.nodes.values():
            node.reset_address()
        self.gateway.announced = {}
        self.gateway.extent = None

    # -- workload ------------------------------------------------------------

    def inject_commands(self, commands: list[tuple[int, Packet]]):
        """Hand (time, packet) commands to the gateway."""
        for time, pkt in commands:
            self.gateway.inject_at(time, pkt)

    def register_state(self) -> dict[Coord, tuple]:
        """Snapshot of every node's impedance registers."""
        return {c: tuple(n.registers) for c, n in self.nodes.items()}

    def bundling_violations(self, ledger) -> list[tuple[str, int]]:
        from .primitives import check_channel_bundling

        out = []
        for ch in self.channels:
            out.extend(check_channel_bundling(ch, ledger))
        return out
