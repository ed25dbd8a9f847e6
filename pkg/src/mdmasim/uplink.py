"""Base-station uplink receive chain.

Per antenna: estimate the impulse response from the pilot field, run a
matched filter (conjugate time-reversed estimate), then combine all antennas
coherently and hard-decide the BPSK symbols at the combining peaks. The same
estimate feeds the delay-profile, timing-advance and SINR estimators used by
the control loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PowerDelayProfile
from .errors import ConfigError, DegenerateInputError, FramingError
from .waveform import ZcSequence


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated M x N tap matrix plus the per-tap noise power inferred from
    the correlation lags beyond the channel window."""

    taps: np.ndarray
    pilot_root: int
    noise_floor: float

    @property
    def antenna_count(self) -> int:
        return int(self.taps.shape[0])

    @property
    def path_count(self) -> int:
        return int(self.taps.shape[1])

    def total_energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass(frozen=True)
class RakeOutput:
    soft_symbols: np.ndarray
    per_antenna_peak: np.ndarray


def estimate_channel(rx: np.ndarray, pilot: ZcSequence, n_paths: int,
                     guard: int | None = None, pilot_start: int = 0) -> ChannelEstimate:
    """Estimate each antenna's impulse response from the pilot field.

    Parameters
    ----------
    rx : (M, L) or (L,) complex array
        Received samples, one row per antenna, containing the pilot field.
    pilot : ZcSequence
        The user's pilot root sequence (without cyclic prefix).
    n_paths : int
        Number of taps to estimate.
    guard : int, optional
        Cyclic-prefix length of the transmitted pilot field. Defaults to
        n_paths - 1, the minimum that keeps the correlation circular.
    pilot_start : int
        Index of the first pilot-field sample in ``rx``.

    The estimator circularly correlates the clean one-period window after
    the prefix against the root sequence, scaled by 1/N_zc. With a
    noiseless single-user input and guard >= true channel spread - 1 the
    estimate equals the true taps exactly, by the ideal periodic
    autocorrelation of the sequence.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=complex))
    if guard is None:
        guard = n_paths - 1
    if guard < 0:
        raise ConfigError("guard must be >= 0")
    if n_paths < 1 or n_paths > pilot.length:
        raise ConfigError(f"n_paths must be in [1, {pilot.length}]")
    window_start = pilot_start + guard
    window_end = window_start + pilot.length
    if rx.shape[1] < window_end:
        raise FramingError(
            f"rx too short: need {window_end} samples to cover the pilot window, got {rx.shape[1]}"
        )
    window = rx[:, window_start:window_end]
    pilot_fft = np.conj(np.fft.fft(pilot.samples))
    lags = np.fft.ifft(np.fft.fft(window, axis=1) * pilot_fft, axis=1) / pilot.length
    taps = lags[:, :n_paths]
    spare = lags[:, n_paths:]
    noise_floor = float(np.mean(np.abs(spare) ** 2)) if spare.size else 0.0
    return ChannelEstimate(taps=taps, pilot_root=pilot.root, noise_floor=noise_floor)


def matched_filters(taps: np.ndarray) -> np.ndarray:
    """Per-antenna RAKE tap gains: conjugate of the time-reversed response."""
    return np.conj(taps[:, ::-1])


def rake_receive(rx: np.ndarray, est: ChannelEstimate,
                 symbol_spacing: int = 1, n_symbols: int | None = None) -> RakeOutput:
    """Matched-filter each antenna, combine coherently, sample the peaks.

    ``rx`` is the data-field segment (M x L, starting at the first data
    symbol's arrival). The combining peak of symbol i sits at offset
    N - 1 + i * symbol_spacing, the full matched-filter overlap.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=complex))
    m, n = est.taps.shape
    if rx.shape[0] != m:
        raise ConfigError(f"rx has {rx.shape[0]} antennas, estimate has {m}")
    filters = matched_filters(est.taps)
    out_len = rx.shape[1] + n - 1
    nfft = int(2 ** np.ceil(np.log2(max(out_len, 2))))
    per_antenna = np.fft.ifft(np.fft.fft(rx, nfft, axis=1) * np.fft.fft(filters, nfft, axis=1),
                              axis=1)[:, :out_len]
    combined = per_antenna.sum(axis=0)
    if n_symbols is None:
        n_symbols = (rx.shape[1] - n) // symbol_spacing + 1
    if n_symbols < 1:
        raise FramingError("rx too short for even one data symbol")
    idx = n - 1 + symbol_spacing * np.arange(n_symbols)
    if idx[-1] >= combined.size:
        raise FramingError("requested symbols extend past the received segment")
    return RakeOutput(soft_symbols=combined[idx],
                      per_antenna_peak=np.abs(per_antenna[:, n - 1]))


def estimate_pdp(est: ChannelEstimate) -> PowerDelayProfile:
    """Average squared tap amplitude across antennas, per delay."""
    return PowerDelayProfile(np.mean(np.abs(est.taps) ** 2, axis=0))


def estimate_sinr(est: ChannelEstimate, rx: np.ndarray,
                  floor_eps: float = 1e-12, ceiling: float = 1e12,
                  subtract_signal: bool = True) -> float:
    """Post-combining SINR estimate from the pilot-based channel estimate.

    Signal power is the per-antenna pilot energy (1/M sum of |tap|^2); the
    interference-plus-noise proxy is the average received per-sample power
    across antennas, minus the signal estimate when ``subtract_signal`` (the
    raw variant keeps the desired signal in the denominator). The ratio is
    scaled by M, the coherent combining gain, and floored/capped so the
    single-user noiseless case degrades to the ceiling instead of dividing
    by zero.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=complex))
    m = est.antenna_count
    signal = est.total_energy() / m
    total = float(np.mean(np.abs(rx) ** 2))
    interference = total - signal if subtract_signal else total
    interference = max(interference, floor_eps)
    return min(m * signal / interference, ceiling)


def timing_advance_from_pdp(pdp: PowerDelayProfile, threshold: float = 0.1) -> int:
    """Index of the first tap at or above threshold * max power.

    The user advances its burst by this offset so the first significant
    path lands on the slot reference.
    """
    powers = pdp.tap_powers
    peak = powers.max()
    if peak <= 0.0:
        raise DegenerateInputError("all-zero delay profile has no first path")
    return int(np.argmax(powers >= threshold * peak))
