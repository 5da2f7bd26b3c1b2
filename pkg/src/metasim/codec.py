"""Packet layout and the wire codec.

A packet is a fixed 64-bit record serialized MSB-first into bus words;
see FORMAT.md for the bit-exact layout. Field widths: opcode 4, load
index 4, coordinates 10+10 bits each for destination and source, payload
16. The codec is lossless over the full field space and rejects anything
that does not fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

OPCODE_BITS = 4
LOAD_BITS = 4
COORD_BITS = 10
CODE_BITS = 8
PACKET_BITS = 64

COORD_MAX = (1 << COORD_BITS) - 1

# Nominal free-space propagation speed used for wavelength arithmetic.
C_NOMINAL_M_PER_S = 3.0e8


class CodecError(Exception):
    pass


class FieldOverflow(CodecError):
    """A packet field exceeds its declared bit width."""


class MalformedPacket(CodecError):
    """A word sequence cannot be decoded into a packet."""


class Opcode(IntEnum):
    SET_IMPEDANCE = 0
    REPORT = 1
    DISCOVER = 2
    ANNOUNCE = 3


@dataclass(frozen=True, order=True)
class Coord:
    x: int
    y: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"coordinates are non-negative, got {self}")


@dataclass(frozen=True)
class ImpedanceCode:
    """Digitally-controlled resistance/reactance pair, 8 bits each."""

    resistance: int
    reactance: int

    def __post_init__(self):
        for v in (self.resistance, self.reactance):
            if not 0 <= v < (1 << CODE_BITS):
                raise ValueError(f"impedance code out of range: {v}")

    def as_payload(self) -> int:
        return (self.resistance << CODE_BITS) | self.reactance

    @classmethod
    def from_payload(cls, payload: int) -> "ImpedanceCode":
        return cls(payload >> CODE_BITS, payload & ((1 << CODE_BITS) - 1))


@dataclass(frozen=True)
class Packet:
    """Addressed command/report unit moving through the fabric."""

    opcode: Opcode
    dest: Coord
    src: Coord
    load_index: int = 0
    payload: int = 0

    def bits(self) -> int:
        """Pack into the canonical 64-bit integer, validating widths."""
        if not 0 <= self.load_index < (1 << LOAD_BITS):
            raise FieldOverflow(f"load_index {self.load_index} exceeds {LOAD_BITS} bits")
        for label, v in (
            ("dest.x", self.dest.x),
            ("dest.y", self.dest.y),
            ("src.x", self.src.x),
            ("src.y", self.src.y),
        ):
            if v > COORD_MAX:
                raise FieldOverflow(f"{label}={v} exceeds {COORD_BITS} bits")
        if not 0 <= self.payload < (1 << 16):
            raise FieldOverflow(f"payload {self.payload} exceeds 16 bits")
        bits = int(self.opcode)
        bits = (bits << LOAD_BITS) | self.load_index
        bits = (bits << COORD_BITS) | self.dest.x
        bits = (bits << COORD_BITS) | self.dest.y
        bits = (bits << COORD_BITS) | self.src.x
        bits = (bits << COORD_BITS) | self.src.y
        bits = (bits << 16) | self.payload
        return bits


def packet_words(bus_width: int) -> int:
    """Bus words per packet; always an integral count."""
    if bus_width < 1:
        raise ValueError("bus width must be positive")
    return -(-PACKET_BITS // bus_width)


def encode_packet(p: Packet, bus_width: int = 16) -> list[int]:
    """Serialize MSB-first into `packet_words(bus_width)` words.

    The final word is zero-padded on the right when the bus width does not
    divide 64.
    """
    n = packet_words(bus_width)
    bits = p.bits() << (n * bus_width - PACKET_BITS)
    mask = (1 << bus_width) - 1
    return [(bits >> ((n - 1 - i) * bus_width)) & mask for i in range(n)]


def decode_packet(words: list[int], bus_width: int = 16) -> Packet:
    """Inverse of encode_packet; raises MalformedPacket on bad input."""
    n = packet_words(bus_width)
    if len(words) != n:
        raise MalformedPacket(f"expected {n} words, got {len(words)}")
    bits = 0
    mask = (1 << bus_width) - 1
    for w in words:
        if not 0 <= w <= mask:
            raise MalformedPacket(f"word {w:#x} exceeds bus width {bus_width}")
        bits = (bits << bus_width) | w
    pad = n * bus_width - PACKET_BITS
    if bits & ((1 << pad) - 1):
        raise MalformedPacket("nonzero padding bits")
    bits >>= pad
    payload = bits & 0xFFFF
    bits >>= 16
    sy = bits & COORD_MAX
    bits >>= COORD_BITS
    sx = bits & COORD_MAX
    bits >>= COORD_BITS
    dy = bits & COORD_MAX
    bits >>= COORD_BITS
    dx = bits & COORD_MAX
    bits >>= COORD_BITS
    load = bits & ((1 << LOAD_BITS) - 1)
    op = bits >> LOAD_BITS
    try:
        opcode = Opcode(op)
    except ValueError:
        raise MalformedPacket(f"unknown opcode {op}") from None
    return Packet(opcode, Coord(dx, dy), Coord(sx, sy), load, payload)


def size_grid(frequency_hz: float) -> tuple[int, float]:
    """Sizing rule for a tile at a given operating frequency.

    At least five meta-atoms per wavelength and at least five wavelengths
    per side: returns (minimum atoms per side, maximum atom pitch in
    meters). Uses the nominal 3e8 m/s propagation speed.
    """
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    wavelength = C_NOMINAL_M_PER_S / frequency_hz
    return (25, wavelength / 5.0)
