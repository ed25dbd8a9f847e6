"""Control-frame bit layouts for the broadcast and paging channels.

All fields are most-significant-bit first. Layout version 1:

  frame    = header | BCH block | PCH block
  header   = Barker code of the configured length, +1 -> bit 0, -1 -> bit 1
  BCH      = beacon_power_db  : int8
             root_count       : uint8
             roots            : uint8 * root_slots (unused slots zero)
             target_rach_db   : int8
             crc              : uint16 (CRC-16/CCITT-FALSE over the bits above)
  PCH      = page_count       : uint8
             page_ids         : uint16 * page_slots (unused slots zero)
             crc              : uint16

Slot counts are fixed by FrameFormat so every frame has the same bit budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FramingError
from .waveform import barker_header

LAYOUT_VERSION = 1


def _int_to_bits(value: int, width: int, signed: bool = False) -> list[int]:
    if signed:
        lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
        if not lo <= value <= hi:
            raise ConfigError(f"value {value} out of range for int{width}")
        value &= (1 << width) - 1
    elif not 0 <= value < (1 << width):
        raise ConfigError(f"value {value} out of range for uint{width}")
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _bits_to_int(bits, signed: bool = False) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    if signed and bits[0]:
        value -= 1 << len(bits)
    return value


def crc16(bits) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over a bit sequence."""
    reg = 0xFFFF
    for b in bits:
        reg ^= int(b) << 15
        reg = ((reg << 1) ^ 0x1021 if reg & 0x8000 else reg << 1) & 0xFFFF
    return reg


@dataclass(frozen=True)
class FrameFormat:
    """Fixed slot counts that pin every frame to one bit budget."""

    header_len: int = 13
    root_slots: int = 4
    page_slots: int = 4

    def __post_init__(self):
        barker_header(self.header_len)  # validates the supported set
        if self.root_slots < 1 or self.page_slots < 1:
            raise ConfigError("slot counts must be >= 1")

    @property
    def bch_bits(self) -> int:
        return 8 + 8 + 8 * self.root_slots + 8 + 16

    @property
    def pch_bits(self) -> int:
        return 8 + 16 * self.page_slots + 16

    @property
    def frame_bits(self) -> int:
        return self.header_len + self.bch_bits + self.pch_bits


@dataclass(frozen=True)
class BchPayload:
    """System information broadcast on the beacon: beacon transmit power,
    permitted random-access pilot roots, target random-access rx power."""

    beacon_power_db: int
    pilot_roots: tuple[int, ...]
    target_rach_power_db: int

    def __post_init__(self):
        object.__setattr__(self, "pilot_roots", tuple(int(r) for r in self.pilot_roots))


@dataclass(frozen=True)
class ControlFrame:
    header_len: int
    bch: BchPayload
    paged_ids: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "paged_ids", tuple(int(i) for i in self.paged_ids))


def encode_bch(payload: BchPayload, fmt: FrameFormat) -> np.ndarray:
    roots = list(payload.pilot_roots)
    if not roots:
        raise ConfigError("BCH must advertise at least one pilot root")
    if len(roots) > fmt.root_slots:
        raise ConfigError(f"too many pilot roots for {fmt.root_slots} slots")
    bits = _int_to_bits(payload.beacon_power_db, 8, signed=True)
    bits += _int_to_bits(len(roots), 8)
    for slot in range(fmt.root_slots):
        bits += _int_to_bits(roots[slot] if slot < len(roots) else 0, 8)
    bits += _int_to_bits(payload.target_rach_power_db, 8, signed=True)
    bits += _int_to_bits(crc16(bits), 16)
    return np.array(bits, dtype=int)


def decode_bch(bits, fmt: FrameFormat) -> BchPayload:
    bits = np.asarray(bits, dtype=int)
    if bits.size != fmt.bch_bits:
        raise FramingError(f"BCH block must be {fmt.bch_bits} bits, got {bits.size}")
    body, crc_bits = bits[:-16], bits[-16:]
    if crc16(body) != _bits_to_int(crc_bits):
        raise FramingError("BCH checksum mismatch")
    beacon_power = _bits_to_int(body[0:8], signed=True)
    count = _bits_to_int(body[8:16])
    if count < 1 or count > fmt.root_slots:
        raise FramingError(f"BCH root count {count} outside [1, {fmt.root_slots}]")
    roots = tuple(_bits_to_int(body[16 + 8 * s:24 + 8 * s]) for s in range(count))
    target = _bits_to_int(body[16 + 8 * fmt.root_slots:24 + 8 * fmt.root_slots], signed=True)
    return BchPayload(beacon_power_db=beacon_power, pilot_roots=roots,
                      target_rach_power_db=target)


def encode_pch(paged_ids, fmt: FrameFormat) -> np.ndarray:
    ids = [int(i) for i in paged_ids]
    if len(ids) > fmt.page_slots:
        raise ConfigError(f"too many paged ids for {fmt.page_slots} slots")
    bits = _int_to_bits(len(ids), 8)
    for slot in range(fmt.page_slots):
        bits += _int_to_bits(ids[slot] if slot < len(ids) else 0, 16)
    bits += _int_to_bits(crc16(bits), 16)
    return np.array(bits, dtype=int)


def decode_pch_ids(bits, fmt: FrameFormat) -> tuple[int, ...]:
    bits = np.asarray(bits, dtype=int)
    if bits.size != fmt.pch_bits:
        raise FramingError(f"PCH block must be {fmt.pch_bits} bits, got {bits.size}")
    body, crc_bits = bits[:-16], bits[-16:]
    if crc16(body) != _bits_to_int(crc_bits):
        raise FramingError("PCH checksum mismatch")
    count = _bits_to_int(body[0:8])
    if count > fmt.page_slots:
        raise FramingError(f"PCH id count {count} exceeds {fmt.page_slots} slots")
    return tuple(_bits_to_int(body[8 + 16 * s:24 + 16 * s]) for s in range(count))


def decode_pch(bits, my_id: int, fmt: FrameFormat) -> bool:
    """Whether this user is paged in the given PCH block."""
    return int(my_id) in decode_pch_ids(bits, fmt)


def encode_control_frame(frame: ControlFrame, fmt: FrameFormat) -> np.ndarray:
    if frame.header_len != fmt.header_len:
        raise ConfigError("frame header length disagrees with the format")
    header_bits = (barker_header(fmt.header_len) < 0).astype(int)
    return np.concatenate([header_bits,
                           encode_bch(frame.bch, fmt),
                           encode_pch(frame.paged_ids, fmt)])


def decode_control_frame(bits, fmt: FrameFormat) -> ControlFrame:
    """Parse a frame-aligned bit block (header included) back into payloads."""
    bits = np.asarray(bits, dtype=int)
    if bits.size < fmt.frame_bits:
        raise FramingError(f"frame needs {fmt.frame_bits} bits, got {bits.size}")
    offset = fmt.header_len
    bch = decode_bch(bits[offset:offset + fmt.bch_bits], fmt)
    offset += fmt.bch_bits
    ids = decode_pch_ids(bits[offset:offset + fmt.pch_bits], fmt)
    return ControlFrame(header_len=fmt.header_len, bch=bch, paged_ids=ids)


def save_iq(path, samples) -> None:
    """Write complex samples as interleaved little-endian float32 pairs."""
    samples = np.asarray(samples, dtype=complex)
    interleaved = np.empty(2 * samples.size, dtype="<f4")
    interleaved[0::2] = samples.real
    interleaved[1::2] = samples.imag
    interleaved.tofile(path)


def load_iq(path) -> np.ndarray:
    """Read interleaved little-endian float32 pairs back into complex samples."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 2:
        raise FramingError("I/Q file holds an odd number of floats")
    return raw[0::2].astype(float) + 1j * raw[1::2].astype(float)
