"""Beacon synthesis and acquisition.

One OFDM control symbol carries a primary control tone (PCT, an unmodulated
synchronization carrier) plus the cell's secondary control tones (SCTs),
whose logical indices are an arithmetic progression with step equal to the
number of cells, so the KX + 1 control subcarriers partition across cell
IDs. The acquisition side recovers symbol timing and fractional frequency
offset from the cyclic prefix, the integer offset from the PCT, the home
cell from SCT power ranking, and the control frame from DPSK-decoded SCT
bits behind a Barker header.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FramingError
from .waveform import barker_header, dpsk_encode

# Physical bin layout: bins [0, guard_bins) and [fft_size - guard_bins,
# fft_size) are guards; logical control index L maps to physical bin
# pct_bin + L, with logical 0 the PCT itself.


@dataclass(frozen=True)
class BeaconConfig:
    fft_size: int
    cp_len: int
    num_cells: int
    scts_per_cell: int
    guard_bins: int = 1
    pct_bin: int | None = None

    def __post_init__(self):
        if self.fft_size < 4 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two >= 4")
        if self.cp_len < 1 or self.cp_len >= self.fft_size:
            raise ConfigError("cp_len must be in [1, fft_size)")
        if self.num_cells < 1 or self.scts_per_cell < 1:
            raise ConfigError("num_cells and scts_per_cell must be >= 1")
        if self.guard_bins < 1:
            raise ConfigError("guard_bins must be >= 1 (keeps the PCT off DC)")
        if self.pct_bin is None:
            object.__setattr__(self, "pct_bin", self.guard_bins)
        usable_low, usable_high = self.guard_bins, self.fft_size - self.guard_bins - 1
        if not usable_low <= self.pct_bin <= usable_high:
            raise ConfigError("pct_bin must lie inside the usable band")
        n_control = self.scts_per_cell * self.num_cells + 1
        if self.pct_bin + n_control - 1 > usable_high:
            raise ConfigError(
                f"{n_control} control subcarriers do not fit above bin {self.pct_bin} "
                f"with {self.guard_bins} guard bins at each edge"
            )

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len


def sct_subcarriers(cell_id: int, cfg: BeaconConfig) -> list[int]:
    """Logical SCT indices of a cell: {a + k X : k = 0..K-1}, step X.

    Cell IDs run 1..X; each cell owns exactly K of the KX control indices,
    maximizing the spacing between a cell's adjacent tones for frequency
    diversity.
    """
    if not 1 <= cell_id <= cfg.num_cells:
        raise ConfigError(f"cell_id must be in [1, {cfg.num_cells}], got {cell_id}")
    x = cfg.num_cells
    return [cell_id + k * x for k in range(cfg.scts_per_cell)]


def sct_physical_bins(cell_id: int, cfg: BeaconConfig) -> np.ndarray:
    return cfg.pct_bin + np.asarray(sct_subcarriers(cell_id, cfg))


def build_beacon_symbol(cell_id: int, dpsk_symbol, cfg: BeaconConfig) -> np.ndarray:
    """Synthesize one control OFDM symbol: unit PCT, the cell's DPSK value
    on its K SCT bins, zeros elsewhere, cyclic prefix prepended.

    ``dpsk_symbol`` is one complex value replicated across the cell's SCTs
    (diversity transmission), or a length-K array for per-tone values.
    """
    values = np.broadcast_to(np.asarray(dpsk_symbol, dtype=complex), (cfg.scts_per_cell,))
    spectrum = np.zeros(cfg.fft_size, dtype=complex)
    spectrum[cfg.pct_bin] = 1.0
    spectrum[sct_physical_bins(cell_id, cfg)] = values
    time = np.fft.ifft(spectrum) * np.sqrt(cfg.fft_size)
    return np.concatenate([time[-cfg.cp_len:], time])


def build_beacon_stream(cell_id: int, bits, cfg: BeaconConfig,
                        reference: complex = 1.0 + 0.0j) -> np.ndarray:
    """DPSK-modulate a control bitstream onto consecutive beacon symbols.

    One bit per OFDM symbol; the first symbol carries the differential
    reference, and every symbol is advanced by a further quarter turn
    (pi/2-rotated DBPSK). The rotation keeps the modulated tones zero-mean
    over time whatever the data, so the unmodulated PCT stays the only
    coherent tone, and it stops run-heavy payloads from repeating whole
    OFDM symbols, which would flatten the timing metric. len(bits) + 1
    symbols are produced.
    """
    symbols = dpsk_encode(bits, reference) * 1j ** np.arange(len(bits) + 1)
    return np.concatenate([build_beacon_symbol(cell_id, s, cfg) for s in symbols])


@dataclass(frozen=True)
class SyncResult:
    symbol_timing: int
    fractional_cfo: float
    integer_cfo: int = 0
    confidence: float = 0.0


def cp_synchronize(rx: np.ndarray, cfg: BeaconConfig,
                   search_len: int | None = None) -> SyncResult:
    """Cyclic-prefix correlation: symbol timing and fractional CFO.

    For each candidate offset, correlate the CP window against the window
    fft_size samples later, summed over every full symbol period the signal
    covers. The peak offset is the symbol start; the peak's phase over
    2 pi fft_size is the fractional frequency offset in cycles per sample.
    """
    rx = np.asarray(rx, dtype=complex)
    period = cfg.symbol_len
    if search_len is None:
        search_len = period
    if rx.size < search_len + period:
        raise FramingError("rx must cover the search window plus one full symbol")
    reps = (rx.size - search_len - cfg.cp_len) // period
    if reps < 1:
        raise FramingError("rx too short for CP correlation")
    # lag-F products once, then a cp-long box sum, then fold symbol periods
    lagged = rx[cfg.fft_size:] * np.conj(rx[:rx.size - cfg.fft_size])
    csum = np.concatenate([[0.0 + 0.0j], np.cumsum(lagged)])
    window_sum = csum[cfg.cp_len:] - csum[:-cfg.cp_len]
    corr = np.zeros(search_len, dtype=complex)
    for r in range(reps):
        corr += window_sum[r * period:r * period + search_len]
    timing = int(np.argmax(np.abs(corr)))
    peak = corr[timing]
    fractional = float(np.angle(peak) / (2.0 * np.pi * cfg.fft_size))
    norm = cfg.cp_len * float(np.sum(np.abs(rx[:reps * period]) ** 2)) / period
    confidence = float(np.abs(peak) / norm) if norm > 0 else 0.0
    return SyncResult(symbol_timing=timing, fractional_cfo=fractional,
                      confidence=min(confidence, 1.0))


def apply_cfo(rx: np.ndarray, cfo_cycles_per_sample: float) -> np.ndarray:
    """Frequency-shift a signal by the given offset (use the negative of an
    estimate to correct it)."""
    rx = np.asarray(rx, dtype=complex)
    return rx * np.exp(2j * np.pi * cfo_cycles_per_sample * np.arange(rx.size))


def symbol_spectra(rx: np.ndarray, timing: int, cfg: BeaconConfig,
                   n_symbols: int | None = None, backoff: int = 0) -> np.ndarray:
    """Strip CPs and FFT each OFDM symbol; rows are per-symbol bin values.

    ``backoff`` pulls each FFT window a few samples into the cyclic prefix,
    which turns small late-timing errors and channel spread into a pure
    per-bin phase ramp instead of inter-symbol leakage.
    """
    rx = np.asarray(rx, dtype=complex)
    period = cfg.symbol_len
    if not 0 <= backoff <= cfg.cp_len:
        raise ConfigError("backoff must be in [0, cp_len]")
    available = (rx.size - timing) // period
    if n_symbols is None:
        n_symbols = available
    if n_symbols < 1 or n_symbols > available:
        raise FramingError("not enough samples for the requested symbols")
    starts = timing + cfg.cp_len - backoff + period * np.arange(n_symbols)
    starts = np.maximum(starts, 0)
    idx = starts[:, None] + np.arange(cfg.fft_size)
    return np.fft.fft(rx[idx], axis=1) / np.sqrt(cfg.fft_size)


def integer_cfo(spectra: np.ndarray, cfg: BeaconConfig, window: int) -> int:
    """Integer frequency offset from the PCT: the bin shift in [-W, W] whose
    symbol-to-symbol products add most coherently.

    The PCT is the only unmodulated tone: its consecutive-symbol products
    all share one phase (any residual frequency-offset slope included), so
    |sum_i v_i conj(v_{i-1})| recovers its full power. Modulated tones lose
    half or more to the data flips, and a plain power metric could not
    tell the PCT from a nearby SCT at all. With a single symbol this
    degenerates to bin power.
    """
    spectra = np.atleast_2d(np.asarray(spectra, dtype=complex))
    if window < 0:
        raise ConfigError("window must be >= 0")
    shifts = np.arange(-window, window + 1)
    bins = cfg.pct_bin + shifts
    if bins[0] < 0 or bins[-1] >= cfg.fft_size:
        raise ConfigError("search window leaves the FFT grid")
    values = spectra[:, bins]
    if values.shape[0] < 2:
        metric = np.abs(values[0]) ** 2
    else:
        metric = np.abs(np.sum(values[1:] * np.conj(values[:-1]), axis=0))
    return int(shifts[np.argmax(metric)])


def correct_integer_cfo(spectra: np.ndarray, shift: int) -> np.ndarray:
    """Undo an integer bin offset by rolling the spectra back."""
    return np.roll(np.atleast_2d(spectra), -shift, axis=1)


def cell_search(spectra: np.ndarray, cfg: BeaconConfig) -> list[tuple[int, float]]:
    """Rank cell IDs by aggregated SCT power, strongest first.

    Power is summed over each cell's SCT bins and averaged over the
    provided symbols; ties break toward the lower cell ID.
    """
    spectra = np.atleast_2d(np.asarray(spectra, dtype=complex))
    mean_power = np.mean(np.abs(spectra) ** 2, axis=0)
    ranking = []
    for cell_id in range(1, cfg.num_cells + 1):
        aggregate = float(np.sum(mean_power[sct_physical_bins(cell_id, cfg)]))
        ranking.append((cell_id, aggregate))
    ranking.sort(key=lambda item: (-item[1], item[0]))
    return ranking


def demodulate_sct_bits(spectra: np.ndarray, cell_id: int, cfg: BeaconConfig) -> np.ndarray:
    """Differentially decode the cell's SCT stream, one bit per symbol gap.

    The decision metric sums Re(-j v_i conj(v_{i-1})) over the cell's K
    tones, undoing the transmitter's quarter-turn advance, so any constant
    phase rotation of the whole stream cancels.
    """
    spectra = np.atleast_2d(np.asarray(spectra, dtype=complex))
    if spectra.shape[0] < 2:
        raise FramingError("need at least two symbols to decode DPSK")
    values = spectra[:, sct_physical_bins(cell_id, cfg)]
    metric = np.sum(np.real(-1j * values[1:] * np.conj(values[:-1])), axis=1)
    return (metric < 0).astype(int)


def frame_sync(bits, header_len: int = 13, threshold: float = 0.7) -> int | None:
    """Locate the Barker header in a decoded bitstream.

    Correlates the +/-1-mapped bits against the header and returns the lag
    of the maximum correlation, or None when the peak falls below
    threshold * header length (caller accumulates more symbols and retries).
    """
    bits = np.asarray(bits, dtype=int)
    header = barker_header(header_len)
    if bits.size < header_len:
        return None
    mapped = 1.0 - 2.0 * bits
    corr = np.correlate(mapped, header, mode="valid")
    start = int(np.argmax(corr))
    if corr[start] < threshold * header_len:
        return None
    return start
