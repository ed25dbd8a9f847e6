"""Multipath channel generation and the correlation quantities behind the scheme.

A user's link to the array is an M x N matrix of discrete-time taps, one row
per antenna, one column per resolvable path. Taps are independent
circularly-symmetric complex Gaussians whose per-delay variance is set by a
power delay profile; antennas are spaced far enough apart that rows are
independent too. The functions below reproduce the statistics that make
multipath signatures usable as a multiple-access resource: self energy close
to M, cross energy with zero mean and variance M.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError


@dataclass(frozen=True)
class PowerDelayProfile:
    """Average tap power per delay, linear scale. The sum is the user's
    average received power."""

    tap_powers: np.ndarray

    def __post_init__(self):
        powers = np.asarray(self.tap_powers, dtype=float)
        if powers.ndim != 1 or powers.size < 1:
            raise ConfigError("tap_powers must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(powers)) or np.any(powers < 0):
            raise ConfigError("tap powers must be finite and non-negative")
        object.__setattr__(self, "tap_powers", powers)

    @property
    def path_count(self) -> int:
        return int(self.tap_powers.size)

    @property
    def total_power(self) -> float:
        return float(self.tap_powers.sum())

    @classmethod
    def uniform(cls, path_count: int, total_power: float = 1.0) -> "PowerDelayProfile":
        if path_count < 1:
            raise ConfigError("path_count must be >= 1")
        return cls(np.full(path_count, total_power / path_count))

    @classmethod
    def exponential(cls, path_count: int, decay: float, total_power: float = 1.0) -> "PowerDelayProfile":
        """Taps proportional to exp(-decay * n), normalized to total_power."""
        if path_count < 1:
            raise ConfigError("path_count must be >= 1")
        if decay <= 0:
            raise ConfigError("decay must be > 0")
        shape = np.exp(-decay * np.arange(path_count))
        return cls(shape * (total_power / shape.sum()))

    @classmethod
    def from_spec(cls, spec: str, path_count: int, total_power: float = 1.0) -> "PowerDelayProfile":
        """Parse the scenario-config shape names: ``uniform`` or ``exp:<decay>``."""
        if spec == "uniform":
            return cls.uniform(path_count, total_power)
        if spec.startswith("exp:"):
            try:
                decay = float(spec.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad exponential decay in pdp spec {spec!r}") from exc
            return cls.exponential(path_count, decay, total_power)
        raise ConfigError(f"unknown pdp spec {spec!r} (expected 'uniform' or 'exp:<decay>')")


@dataclass(frozen=True)
class ChannelMatrix:
    """M x N complex tap matrix; row m holds the impulse response seen at
    antenna m."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex)
        if taps.ndim != 2 or taps.shape[0] < 1 or taps.shape[1] < 1:
            raise ConfigError("taps must be a 2-D M x N array with M, N >= 1")
        if not np.all(np.isfinite(taps)):
            raise ConfigError("taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def antenna_count(self) -> int:
        return int(self.taps.shape[0])

    @property
    def path_count(self) -> int:
        return int(self.taps.shape[1])

    def total_energy(self) -> float:
        """Sum of |tap|^2 over all antennas and delays."""
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass(frozen=True)
class ChannelGenConfig:
    antenna_count: int
    pdp: PowerDelayProfile
    seed: int = 0

    def __post_init__(self):
        if self.antenna_count < 1:
            raise ConfigError("antenna_count must be >= 1")


def generate_channel(cfg: ChannelGenConfig) -> ChannelMatrix:
    """Draw one channel realization.

    Taps are independent CN(0, p_n) across antennas and delays, with p_n the
    profile's tap power. The same config and seed reproduce the matrix
    bit-for-bit.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    m, n = cfg.antenna_count, cfg.pdp.path_count
    scale = np.sqrt(cfg.pdp.tap_powers / 2.0)
    taps = scale * (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))
    return ChannelMatrix(taps)


def sample_taps(pdp: PowerDelayProfile, antenna_count: int, rng: np.random.Generator,
                batch: int = 1) -> np.ndarray:
    """Raw tap draws for harness-level batching: shape (batch, M, N)."""
    scale = np.sqrt(pdp.tap_powers / 2.0)
    shape = (batch, antenna_count, pdp.path_count)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_channel(tx: np.ndarray, h: ChannelMatrix,
                  noise_power: float = 0.0,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Propagate one transmit stream through the channel to all M antennas.

    Returns an M x (L + N - 1) array: per-antenna linear convolution of the
    samples with that antenna's impulse response, plus complex white noise
    of the given per-sample power.
    """
    tx = np.asarray(tx, dtype=complex)
    m, n = h.taps.shape
    out_len = tx.size + n - 1
    nfft = int(2 ** np.ceil(np.log2(max(out_len, 2))))
    spec = np.fft.fft(tx, nfft) * np.fft.fft(h.taps, nfft, axis=1)
    rx = np.fft.ifft(spec, axis=1)[:, :out_len]
    if noise_power > 0.0:
        if rng is None:
            raise ConfigError("noise_power > 0 requires an rng")
        sigma = np.sqrt(noise_power / 2.0)
        rx = rx + sigma * (rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape))
    return rx


def row_cross_correlation(a: ChannelMatrix, b: ChannelMatrix, m: int) -> complex:
    """Normalized cross correlation of antenna m's rows of two users.

    <a_m, b_m> / (|a_m| |b_m|) with the conventional complex inner product,
    so |result| <= 1 and self-correlation is exactly 1.
    """
    if a.taps.shape != b.taps.shape:
        raise ConfigError("channel matrices must share dimensions")
    if not 0 <= m < a.antenna_count:
        raise ConfigError(f"antenna index {m} out of range for M={a.antenna_count}")
    row_a, row_b = a.taps[m], b.taps[m]
    norm_a = np.linalg.norm(row_a)
    norm_b = np.linalg.norm(row_b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("zero-norm row has no defined correlation")
    return complex(np.vdot(row_b, row_a) / (norm_a * norm_b))


def normalized_self_energy(h: ChannelMatrix, p: float) -> float:
    """Total channel energy over the average received power; expectation M."""
    if p <= 0:
        raise ConfigError("average received power must be > 0")
    return h.total_energy() / p


def interference_cross_energy(a: ChannelMatrix, b: ChannelMatrix, *,
                              convention: str = "unit-power",
                              row_power_a: float | None = None,
                              row_power_b: float | None = None) -> complex:
    """Sum over antennas of the per-row cross term between two users.

    convention="unit-power" scales each row inner product by
    sqrt(N / (P_a * P_b)), P being the average row power (estimated from the
    matrix when not given). Each term then has unit variance for evenly
    spread tap power, so over independent users the sum has mean 0 and
    variance M. convention="realized" divides by the realized row norms
    instead; the sum is then bounded by M but its variance is M/N.
    """
    if a.taps.shape != b.taps.shape:
        raise ConfigError("channel matrices must share dimensions")
    n = a.path_count
    inner = np.sum(a.taps * np.conj(b.taps), axis=1)
    if convention == "unit-power":
        p_a = row_power_a if row_power_a is not None else np.mean(np.abs(a.taps) ** 2) * n
        p_b = row_power_b if row_power_b is not None else np.mean(np.abs(b.taps) ** 2) * n
        if p_a <= 0 or p_b <= 0:
            raise DegenerateInputError("zero-power matrix has no defined cross energy")
        return complex(np.sum(inner) * np.sqrt(n / (p_a * p_b)))
    if convention == "realized":
        norms_a = np.linalg.norm(a.taps, axis=1)
        norms_b = np.linalg.norm(b.taps, axis=1)
        if np.any(norms_a == 0.0) or np.any(norms_b == 0.0):
            raise DegenerateInputError("zero-norm row has no defined correlation")
        return complex(np.sum(inner / (norms_a * norms_b)))
    raise ConfigError(f"unknown convention {convention!r}")
