"""Sequence and symbol primitives: ZC pilots, Barker headers, BPSK/DPSK
mapping, and uplink burst assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FramingError

# Published Barker codes. Length 5 exists but is deliberately not enrolled;
# the supported set is part of the contract.
_BARKER = {
    7: np.array([+1, +1, +1, -1, -1, +1, -1], dtype=float),
    11: np.array([+1, +1, +1, -1, -1, -1, +1, -1, -1, +1, -1], dtype=float),
    13: np.array([+1, +1, +1, +1, +1, -1, -1, +1, +1, -1, +1, -1, +1], dtype=float),
}


@dataclass(frozen=True)
class ZcSequence:
    """Constant-amplitude pilot sequence with ideal periodic autocorrelation.

    samples[n] = exp(-j pi q n (n+1) / N) for odd length N and root q
    coprime with N. Odd length makes the sequence exactly periodic in N, so
    cyclic extensions are just repeated samples.
    """

    root: int
    length: int
    samples: np.ndarray

    @property
    def n_zc(self) -> int:
        return self.length


def zc_generate(root: int, length: int) -> ZcSequence:
    if length < 3 or length % 2 == 0:
        raise ConfigError(f"ZC length must be odd and >= 3, got {length}")
    if not 1 <= root < length:
        raise ConfigError(f"ZC root must satisfy 1 <= root < length, got {root}")
    if math.gcd(root, length) != 1:
        raise ConfigError(f"ZC root {root} not coprime with length {length}")
    n = np.arange(length)
    samples = np.exp(-1j * np.pi * root * n * (n + 1) / length)
    return ZcSequence(root=root, length=length, samples=samples)


def cyclic_prefix_pilot(pilot: ZcSequence, guard: int) -> np.ndarray:
    """Pilot field: the sequence preceded by its last ``guard`` samples.

    The prefix absorbs channel spread so the receiver can correlate
    circularly over one clean period; guard must be at least the channel
    length minus one.
    """
    if guard < 0:
        raise ConfigError("guard must be >= 0")
    if guard == 0:
        return pilot.samples.copy()
    if guard >= pilot.length:
        raise ConfigError("guard must be shorter than the pilot sequence")
    return np.concatenate([pilot.samples[-guard:], pilot.samples])


def barker_header(length: int) -> np.ndarray:
    """Return the published Barker code of the given length as +/-1 values."""
    try:
        return _BARKER[length].copy()
    except KeyError:
        raise ConfigError(
            f"unsupported Barker length {length}; supported: {sorted(_BARKER)}"
        ) from None


def bpsk_map(bits) -> np.ndarray:
    """0 -> +1, 1 -> -1."""
    bits = np.asarray(bits, dtype=int)
    return 1.0 - 2.0 * bits


def bpsk_hard_decide(soft) -> np.ndarray:
    """Decide by the sign of the real part; an exact zero breaks to bit 0."""
    soft = np.asarray(soft)
    return (np.real(soft) < 0).astype(int)


def dpsk_encode(bits, reference: complex = 1.0 + 0.0j) -> np.ndarray:
    """Binary DPSK: s[0] is the reference, each 1-bit flips the phase."""
    if abs(abs(reference) - 1.0) > 1e-9:
        raise ConfigError("DPSK reference symbol must be unit modulus")
    bits = np.asarray(bits, dtype=int)
    symbols = np.empty(bits.size + 1, dtype=complex)
    symbols[0] = reference
    flips = np.cumprod(np.where(bits == 1, -1.0, 1.0)) if bits.size else np.array([])
    symbols[1:] = reference * flips
    return symbols


def dpsk_decode(symbols) -> np.ndarray:
    """Invert dpsk_encode: bit i from the sign of Re(s[i+1] conj(s[i]))."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size <= 1:
        return np.array([], dtype=int)
    metric = np.real(symbols[1:] * np.conj(symbols[:-1]))
    return (metric < 0).astype(int)


@dataclass(frozen=True)
class BasebandSignal:
    """Complex sample sequence at one sample per path-resolution interval,
    with the amplitude scale applied at transmission (sqrt of power)."""

    samples: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(samples)):
            raise ConfigError("signal samples must be finite")
        if self.scale < 0:
            raise ConfigError("scale must be >= 0")
        object.__setattr__(self, "samples", samples)

    def scaled(self) -> np.ndarray:
        return self.samples * self.scale


@dataclass(frozen=True)
class UplinkBurst:
    """Layout of an uplink transmission: pilot field first, data field second,
    contiguous in time.

    ``symbol_spacing`` is the hop in samples between data symbols: 1 means
    back-to-back transmission (the default, inter-symbol interference
    included), >= path count isolates symbols for exactness checks.
    """

    pilot_field_len: int
    n_symbols: int
    symbol_spacing: int = 1

    def __post_init__(self):
        if self.n_symbols < 1:
            raise ConfigError("data field must be non-empty")
        if self.symbol_spacing < 1:
            raise ConfigError("symbol_spacing must be >= 1")

    @property
    def data_start(self) -> int:
        return self.pilot_field_len

    def peak_index(self, symbol: int, path_count: int) -> int:
        """Sample index (in the receive stream) of this symbol's combining
        peak after an N-tap matched filter."""
        return self.data_start + symbol * self.symbol_spacing + path_count - 1


def assemble_uplink_burst(pilot_field: np.ndarray, data_bits,
                          symbol_spacing: int = 1, power: float = 1.0) -> BasebandSignal:
    """Concatenate [pilot field | BPSK data] into one transmit signal.

    The pilot field is used as given (pass a cyclic-prefixed field for
    multipath operation). Pilot and data run at the same per-sample power;
    ``power`` sets the common transmit power via the signal scale.
    """
    pilot_field = np.asarray(pilot_field, dtype=complex)
    symbols = bpsk_map(data_bits).astype(complex)
    if symbols.size == 0:
        raise ConfigError("data field must be non-empty")
    if symbol_spacing < 1:
        raise ConfigError("symbol_spacing must be >= 1")
    if symbol_spacing == 1:
        data = symbols
    else:
        data = np.zeros((symbols.size - 1) * symbol_spacing + 1, dtype=complex)
        data[::symbol_spacing] = symbols
    samples = np.concatenate([pilot_field, data])
    return BasebandSignal(samples=samples, scale=float(np.sqrt(power)))
