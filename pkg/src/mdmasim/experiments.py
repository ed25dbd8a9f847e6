"""Monte Carlo experiment runners.

The uplink SIR measurement underneath most experiments: draw all users'
channel matrices, run the superposed interferer waveform through the desired
user's perfect-CSI RAKE, and take the ratio of the coherent peak power to
the mean residual power at the peak sampling instants. The residual counts
co-channel interference (all symbol alignments of the other users) plus the
other-cell term; the desired user's own inter-symbol leakage is excluded,
which is what makes the two-user ratio converge to M and the K-user ratio
to M / (K - 1).

Trials are processed in fixed-size blocks of batched FFT convolutions; the
block size is a deterministic function of the scenario, so results depend
only on (scenario, seed).
"""

from __future__ import annotations

import math

import numpy as np

from .channel import PowerDelayProfile
from .errors import ConfigError
from .results import CheckOutcome, ExperimentResult
from .rng import rng_for
from .scenario import Scenario

_BLOCK_ELEMENT_BUDGET = 1 << 21


def _block_size(m: int, k: int, n: int) -> int:
    return max(1, min(64, _BLOCK_ELEMENT_BUDGET // (m * k * n)))


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1).bit_length())


def awgn_bpsk_ber(snr_linear: float) -> float:
    """Reference bit error rate of coherent BPSK on AWGN: Q(sqrt(2 SNR))."""
    return 0.5 * math.erfc(math.sqrt(snr_linear))


def sir_samples(antennas: int, users: int, pdp: PowerDelayProfile,
                symbols_per_trial: int, other_cell_factor: float,
                trials: int, seed: int, stream: int = 0,
                all_users: bool = False,
                include_self_isi: bool = False) -> np.ndarray:
    """Per-trial linear output SIR of the RAKE-detected user.

    Returns shape (trials,) for the first user, or (trials, users) when
    ``all_users`` measures every user against the rest. Setting
    ``include_self_isi`` keeps the measured user's own symbol leakage in the
    residual, which drops the K-user ratio from M/(K-1) toward M/K.
    """
    if users < 2:
        raise ConfigError("SIR measurement needs at least two users")
    if symbols_per_trial < 1:
        raise ConfigError("symbols_per_trial must be >= 1")
    m, k, n = antennas, users, pdp.path_count
    n_sym = symbols_per_trial
    scale = np.sqrt(pdp.tap_powers / 2.0)
    nq = _next_pow2(2 * n)
    nfft = _next_pow2(n_sym + 2 * n)
    peak_lo, peak_hi = n - 1, n - 1 + n_sym
    block = _block_size(m, k, n)
    n_measured = k if all_users else 1
    out = np.empty((trials, n_measured))
    done = 0
    for b in range(math.ceil(trials / block)):
        rng = rng_for(seed, stream, b)
        size = min(block, trials - done)
        h = scale * (rng.standard_normal((size, k, m, n))
                     + 1j * rng.standard_normal((size, k, m, n)))
        hf = np.fft.fft(h, nq, axis=-1)
        symbols = 1.0 - 2.0 * rng.integers(0, 2, (size, k, n_sym))
        sf = np.fft.fft(symbols, nfft, axis=-1)
        if all_users:
            gf = np.fft.fft(np.conj(h[..., ::-1]), nq, axis=-1)
            # q[b, i, j]: user i's stream through user j's matched filters
            q = np.fft.ifft(np.einsum("bimf,bjmf->bijf", hf, gf),
                            axis=-1)[..., :2 * n - 1]
            diag = np.arange(k)
            peaks = np.real(q[:, diag, diag, n - 1])                 # (size, k)
            qw = np.fft.fft(q, nfft, axis=-1)
            total_f = np.einsum("bif,bijf->bjf", sf, qw)
            if include_self_isi:
                y = np.fft.ifft(total_f, axis=-1)[:, :, peak_lo:peak_hi]
                y = y - peaks[:, :, None] * symbols                  # leave own ISI
            else:
                own_f = np.einsum("bjf,bjjf->bjf", sf, qw)
                y = np.fft.ifft(total_f - own_f, axis=-1)[:, :, peak_lo:peak_hi]
        else:
            gf = np.fft.fft(np.conj(h[:, 0, :, ::-1]), nq, axis=-1)
            q = np.fft.ifft(np.einsum("bkmf,bmf->bkf", hf, gf),
                            axis=-1)[..., :2 * n - 1]
            peaks = np.real(q[:, 0, n - 1])[:, None]                 # (size, 1)
            qw = np.fft.fft(q, nfft, axis=-1)
            int_f = (sf[:, 1:] * qw[:, 1:]).sum(axis=1)
            if include_self_isi:
                own = np.fft.ifft(sf[:, 0] * qw[:, 0], axis=-1)[:, peak_lo:peak_hi]
                own = own - peaks * symbols[:, 0]
                y = np.fft.ifft(int_f, axis=-1)[:, peak_lo:peak_hi] + own
            else:
                y = np.fft.ifft(int_f, axis=-1)[:, peak_lo:peak_hi]
            y = y[:, None, :]                                        # (size, 1, n_sym)
        if other_cell_factor > 0.0:
            home = np.mean(np.abs(y) ** 2, axis=-1, keepdims=True)
            sigma = np.sqrt(other_cell_factor * home / 2.0)
            y = y + sigma * (rng.standard_normal(y.shape)
                             + 1j * rng.standard_normal(y.shape))
        resid = np.mean(np.abs(y) ** 2, axis=-1)
        out[done:done + size] = peaks ** 2 / resid
        done += size
    return out if all_users else out[:, 0]


def combined_autocorrelation(h: np.ndarray) -> np.ndarray:
    """Sum over antennas of each row's autocorrelation: the end-to-end
    response of a channel through its own matched filters, 2N - 1 taps with
    the total energy at the center."""
    m, n = h.shape
    nq = _next_pow2(2 * n)
    hf = np.fft.fft(h, nq, axis=-1)
    gf = np.fft.fft(np.conj(h[:, ::-1]), nq, axis=-1)
    return np.fft.ifft(hf * gf, axis=-1).sum(axis=0)[: 2 * n - 1]


def ber_samples(antennas: int, pdp: PowerDelayProfile, snr_db: float, n_bits: int,
                seed: int, stream: int = 0, bits_per_realization: int = 1 << 15) -> float:
    """Single-user BER at a fixed post-combining SNR.

    The receive chain collapses exactly to: decision_i = A s_i + (own ISI)
    + nu_i, with A the total channel energy, ISI the off-center taps of the
    combined autocorrelation convolved with the neighboring symbols, and nu
    the matched-filtered noise, variance A^2 / SNR at the peaks (power
    control holds the post-combining SNR at the target per realization).
    Decisions are simulated at that output point directly; their marginal
    statistics equal the full per-antenna waveform simulation's.
    """
    snr = 10.0 ** (snr_db / 10.0)
    n = pdp.path_count
    scale = np.sqrt(pdp.tap_powers / 2.0)
    errors = 0
    done = 0
    block_index = 0
    while done < n_bits:
        rng = rng_for(seed, stream, block_index)
        block_index += 1
        size = min(bits_per_realization, n_bits - done)
        h = scale * (rng.standard_normal((antennas, n))
                     + 1j * rng.standard_normal((antennas, n)))
        q = combined_autocorrelation(h)
        amp = q[n - 1].real
        s = rng.choice((-1.0, 1.0), size)
        soft = np.convolve(s, q)[n - 1:n - 1 + size]
        sigma = np.sqrt(amp * amp / snr / 2.0)
        soft = soft + sigma * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
        errors += int(np.count_nonzero(np.real(soft) * s < 0))
        done += size
    return errors / n_bits


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------

def run_sir_experiment(scenario: Scenario) -> ExperimentResult:
    """Record per-trial output SIR for the configured (M, K) point."""
    if scenario.users < 2:
        raise ConfigError("SIR experiment needs users >= 2 (no interference otherwise)")
    sirs = sir_samples(scenario.antennas, scenario.users, scenario.make_pdp(),
                       scenario.symbols_per_trial, scenario.other_cell_factor,
                       scenario.trials, scenario.seed)
    result = ExperimentResult("sir", scenario.to_dict())
    for t, sir in enumerate(sirs):
        result.add(t, "sir_db", 10.0 * np.log10(sir))
    result.summary = result.summarize()
    result.summary["mean_sir_db"] = float(10.0 * np.log10(np.mean(sirs)))
    result.summary["theory_sir_db"] = theory_sir_db(scenario)
    return result


def theory_sir_db(scenario: Scenario) -> float:
    """The processing-gain prediction for the scenario: M over (K - 1)
    same-cell interferers, scaled down by the other-cell factor."""
    linear = scenario.antennas / ((scenario.users - 1) * (1.0 + scenario.other_cell_factor))
    return float(10.0 * np.log10(linear))


def run_hardening_experiment(scenario: Scenario) -> ExperimentResult:
    """Sweep the antenna count at fixed K and record the SIR spread."""
    if not scenario.antenna_sweep:
        raise ConfigError("antenna_sweep must be non-empty")
    result = ExperimentResult("hardening", scenario.to_dict())
    pdp = scenario.make_pdp()
    for i, m in enumerate(scenario.antenna_sweep):
        sirs = sir_samples(m, scenario.users, pdp, scenario.symbols_per_trial,
                           scenario.other_cell_factor, scenario.trials,
                           scenario.seed, stream=i)
        for t, sir in enumerate(sirs):
            result.add(t, f"sir_db_m{m}", 10.0 * np.log10(sir))
    result.summarize()
    return result


def run_ber_experiment(scenario: Scenario) -> ExperimentResult:
    """Single-user BER against post-combining SNR, with the AWGN reference."""
    if scenario.noise_power <= 0 and not scenario.snr_db:
        raise ConfigError("BER experiment needs an SNR grid")
    result = ExperimentResult("ber", scenario.to_dict())
    pdp = scenario.make_pdp()
    for i, snr_db in enumerate(scenario.snr_db):
        ber = ber_samples(scenario.antennas, pdp, snr_db, scenario.bits_per_snr,
                          scenario.seed, stream=i)
        result.add(i, "snr_db", snr_db)
        result.add(i, "ber", ber)
        result.add(i, "ber_awgn_reference", awgn_bpsk_ber(10.0 ** (snr_db / 10.0)))
    result.summarize()
    return result


def spectral_efficiency_from_sirs(sirs_linear) -> float:
    """Sum-rate indicator: sum over users of log2(1 + SIR)."""
    sirs = np.asarray(sirs_linear, dtype=float)
    return float(np.sum(np.log2(1.0 + sirs)))


def run_spectral_efficiency(scenario: Scenario) -> ExperimentResult:
    """Per-trial sum of log2(1 + SIR_k) over all users, with a confidence
    interval. An upper-bound-style indicator, not a calibrated throughput."""
    if scenario.users < 2:
        raise ConfigError("spectral-efficiency experiment needs users >= 2")
    sirs = sir_samples(scenario.antennas, scenario.users, scenario.make_pdp(),
                       scenario.symbols_per_trial, scenario.other_cell_factor,
                       scenario.trials, scenario.seed, all_users=True)
    result = ExperimentResult("speff", scenario.to_dict())
    per_trial = np.array([spectral_efficiency_from_sirs(row) for row in sirs])
    for t, v in enumerate(per_trial):
        result.add(t, "speff_bps_hz", v)
    result.summarize()
    half_width = 1.96 * np.std(per_trial) / np.sqrt(per_trial.size)
    result.summary["speff_ci95_lo"] = float(np.mean(per_trial) - half_width)
    result.summary["speff_ci95_hi"] = float(np.mean(per_trial) + half_width)
    return result


# ---------------------------------------------------------------------------
# --check validations (exit code 3 at the CLI when any fails)
# ---------------------------------------------------------------------------

def check_sir(result: ExperimentResult, scenario: Scenario) -> list[CheckOutcome]:
    mean_db = result.summary["mean_sir_db"]
    theory = result.summary["theory_sir_db"]
    ok = abs(mean_db - theory) <= 1.0
    return [CheckOutcome("mean SIR vs processing gain", ok,
                         f"measured {mean_db:.2f} dB, predicted {theory:.2f} dB")]


def check_hardening(result: ExperimentResult, scenario: Scenario) -> list[CheckOutcome]:
    stds = [result.summary[f"sir_db_m{m}_std"] for m in scenario.antenna_sweep]
    pairs = list(zip(scenario.antenna_sweep, stds))
    ok = all(b <= a + 1e-12 for a, b in zip(stds, stds[1:])) if len(stds) > 1 else True
    detail = ", ".join(f"M={m}: {s:.3f} dB" for m, s in pairs)
    return [CheckOutcome("SIR spread non-increasing in M", ok, detail)]


def check_ber(result: ExperimentResult, scenario: Scenario) -> list[CheckOutcome]:
    checks = []
    bers = result.values("ber")
    refs = result.values("ber_awgn_reference")
    for snr_db, ber, ref in zip(scenario.snr_db, bers, refs):
        if ber == 0.0 and ref * scenario.bits_per_snr < 10:
            checks.append(CheckOutcome(f"BER at {snr_db} dB", True,
                                       "no errors expected at this depth"))
            continue
        ok = ber <= 2.0 * ref and ber >= ref / 2.0
        checks.append(CheckOutcome(f"BER at {snr_db} dB", ok,
                                   f"measured {ber:.3e}, AWGN reference {ref:.3e}"))
    return checks


def check_speff(result: ExperimentResult, scenario: Scenario) -> list[CheckOutcome]:
    mean = result.summary["speff_bps_hz_mean"]
    ok = np.isfinite(mean) and mean > 0
    return [CheckOutcome("spectral-efficiency indicator finite", ok,
                         f"mean {mean:.2f} bps/Hz/cell "
                         f"(95% CI [{result.summary['speff_ci95_lo']:.2f}, "
                         f"{result.summary['speff_ci95_hi']:.2f}])")]
