"""Base-station downlink: pre-RAKE precoding from the uplink channel
estimate (TDD reciprocity) and the single-tap user receiver.

The transmit filters are the same conjugate time-reversed responses the
uplink RAKE uses, applied at the transmitter instead, so the user sees an
impulse-like end-to-end channel and needs only a sampler and a hard
decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix
from .errors import ConfigError, DegenerateInputError, FramingError
from .uplink import ChannelEstimate
from .waveform import bpsk_hard_decide, bpsk_map


@dataclass(frozen=True)
class PrerakeWeights:
    """Per-antenna transmit filters plus the scalar g that normalizes total
    radiated energy per symbol to one."""

    per_antenna_filters: np.ndarray
    normalization: float

    @property
    def antenna_count(self) -> int:
        return int(self.per_antenna_filters.shape[0])

    @property
    def path_count(self) -> int:
        return int(self.per_antenna_filters.shape[1])


def prerake_weights(est: ChannelEstimate) -> PrerakeWeights:
    """Conjugate time-reversal of the estimated response, unit total power."""
    energy = est.total_energy()
    if energy <= 0.0:
        raise DegenerateInputError("all-zero channel estimate cannot be precoded")
    filters = np.conj(est.taps[:, ::-1])
    return PrerakeWeights(per_antenna_filters=filters,
                          normalization=float(1.0 / np.sqrt(energy)))


def transmit_downlink(data_bits, w: PrerakeWeights, symbol_spacing: int = 1) -> np.ndarray:
    """Precode a BPSK stream: per antenna, convolve with that antenna's
    filter and scale by g. Returns an M x L array of antenna signals."""
    symbols = bpsk_map(data_bits).astype(complex)
    if symbol_spacing < 1:
        raise ConfigError("symbol_spacing must be >= 1")
    if symbol_spacing > 1:
        stream = np.zeros((symbols.size - 1) * symbol_spacing + 1, dtype=complex)
        stream[::symbol_spacing] = symbols
    else:
        stream = symbols
    n = w.path_count
    out_len = stream.size + n - 1
    nfft = int(2 ** np.ceil(np.log2(max(out_len, 2))))
    spec = np.fft.fft(stream, nfft) * np.fft.fft(w.per_antenna_filters, nfft, axis=1)
    return w.normalization * np.fft.ifft(spec, axis=1)[:, :out_len]


def effective_downlink_channel(h: ChannelMatrix, w: PrerakeWeights) -> np.ndarray:
    """End-to-end single-user response: g * sum_m (h_m conv w_m), 2N-1 taps.

    When the weights derive from the true channel the center tap (index
    N - 1) is g times the total channel energy, real and positive.
    """
    if h.taps.shape != w.per_antenna_filters.shape:
        raise ConfigError("channel and weights must share dimensions")
    n = h.path_count
    acc = np.zeros(2 * n - 1, dtype=complex)
    for m in range(h.antenna_count):
        acc += np.convolve(h.taps[m], w.per_antenna_filters[m])
    return w.normalization * acc


def user_receive(rx: np.ndarray, first_peak: int, n_symbols: int,
                 symbol_spacing: int = 1) -> np.ndarray:
    """Sample the received stream at the center-tap instants and hard-decide."""
    rx = np.asarray(rx, dtype=complex)
    if n_symbols < 1:
        raise ConfigError("n_symbols must be >= 1")
    idx = first_peak + symbol_spacing * np.arange(n_symbols)
    if first_peak < 0 or idx[-1] >= rx.size:
        raise FramingError("symbol timing falls outside the received signal")
    return bpsk_hard_decide(rx[idx])


def perturb_reciprocity(est: ChannelEstimate, gain_std: float,
                        rng: np.random.Generator) -> ChannelEstimate:
    """Apply a per-antenna complex gain error to model calibration mismatch.

    Each antenna's row is multiplied by 1 + e with e complex Gaussian of
    standard deviation ``gain_std``. gain_std = 0 returns the estimate
    unchanged (pure reciprocity, the default elsewhere).
    """
    if gain_std < 0:
        raise ConfigError("gain_std must be >= 0")
    if gain_std == 0.0:
        return est
    m = est.antenna_count
    errors = 1.0 + gain_std / np.sqrt(2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return ChannelEstimate(taps=est.taps * errors[:, None],
                           pilot_root=est.pilot_root,
                           noise_floor=est.noise_floor)
