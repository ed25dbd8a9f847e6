"""End-to-end call setup over the full stack.

Each user walks the handset initialization sequence against a live PHY:
beacon acquisition off the synthesized downlink, open-loop powered random
access with collision and backoff handling, a pre-RAKE acknowledgment
carrying the dedicated pilot root plus timing advance and power correction,
then dedicated subframes under closed-loop power control, and release.

The simulation advances on a slot clock (two uplink then two downlink slots
per subframe); every state transition lands in the protocol trace with the
slot it happened in. All randomness derives from the scenario seed, so the
trace is byte-identical across reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acquisition import acquire, default_control_frame, make_capture
from .channel import ChannelMatrix, apply_channel
from .errors import ConfigError
from .frames import FrameFormat
from .mac import (AckMessage, BsCallState, CallState, Event, FrameConfig,
                  PowerControlState, RachConfig, RachOutcome, TraceRecorder,
                  adjudicate_rach, bs_fsm_step, calibrate_rach_threshold,
                  closed_loop_step, fsm_step, open_loop_power,
                  rach_slot_waveform, send_ack)
from .results import CheckOutcome, ExperimentResult
from .rng import rng_for
from .scenario import Scenario
from .uplink import (estimate_channel, estimate_pdp, estimate_sinr,
                     rake_receive, timing_advance_from_pdp)
from .waveform import (assemble_uplink_burst, bpsk_hard_decide,
                       cyclic_prefix_pilot, zc_generate)

MAX_RACH_ATTEMPTS = 4
MAX_SYNC_ATTEMPTS = 3
DEDICATED_SUBFRAMES = 3
MAX_EXTRA_DELAY = 3
DATA_BITS_PER_SLOT = 64
DEDICATED_PILOT_LEN = 63


def dedicated_root_for(index: int, pilot_len: int = DEDICATED_PILOT_LEN) -> int:
    """The index-th pilot root at or above 20 that is coprime with the
    dedicated pilot length (63 = 7 * 9, so plenty of integers are not)."""
    root = 20
    seen = 0
    while True:
        if math.gcd(root, pilot_len) == 1:
            if seen == index:
                return root
            seen += 1
        root += 1


@dataclass
class UeSession:
    ue_id: int
    channel: ChannelMatrix          # includes the user's true propagation delay
    true_delay: int
    state: CallState = CallState.POWER_OFF
    bs_state: BsCallState = BsCallState.IDLE
    rach_attempts: int = 0
    sync_attempts: int = 0
    backoff_until: int = 0          # subframe index gating the next attempt
    chosen_root: int | None = None
    ack: AckMessage | None = None
    pcs: PowerControlState | None = None
    tx_power_db: float = 0.0
    measured_beacon_db: float = 0.0
    dedicated_left: int = DEDICATED_SUBFRAMES
    ta_residuals: list[int] = field(default_factory=list)
    power_history: list[float] = field(default_factory=list)
    data_bit_errors: int = 0
    failure: str | None = None


@dataclass
class CallSetupResult:
    success: bool
    trace: TraceRecorder
    sessions: list[UeSession]
    experiment: ExperimentResult


def _step_ue(ue: UeSession, event: Event, slot: int, trace: TraceRecorder) -> None:
    nxt = fsm_step(ue.state, event)
    trace.record(slot, f"ue{ue.ue_id}", ue.state, event, nxt)
    ue.state = nxt


def _step_bs(ue: UeSession, event: Event, slot: int, trace: TraceRecorder) -> None:
    nxt = bs_fsm_step(ue.bs_state, event)
    trace.record(slot, f"bs.ue{ue.ue_id}", ue.bs_state, event, nxt)
    ue.bs_state = nxt


def run_call_setup(scenario: Scenario) -> CallSetupResult:
    """Drive every user from power-on to release and report the outcome."""
    fmt = FrameFormat(root_slots=max(4, len(scenario.rach_roots)))
    beacon_cfg = scenario.beacon_config()
    frame = default_control_frame(scenario, fmt)
    bch = frame.bch
    n_paths_bs = scenario.paths + MAX_EXTRA_DELAY
    noise = scenario.noise_power
    if noise > 0:
        base_cfg = RachConfig(n_paths=n_paths_bs)
        threshold = calibrate_rach_threshold(base_cfg, scenario.antennas, noise,
                                             trials=200, seed=scenario.seed ^ 0x5EED)
    else:
        threshold = 1e-9
    rach_cfg = RachConfig(n_paths=n_paths_bs, detection_threshold=threshold)
    frame_cfg = FrameConfig(subframes_per_frame=8,
                            samples_per_slot=8 * beacon_cfg.symbol_len)

    trace = TraceRecorder()
    sessions: list[UeSession] = []
    pdp = scenario.make_pdp()
    for i in range(scenario.n_ues):
        rng = rng_for(scenario.seed, 100 + i)
        taps = (np.sqrt(pdp.tap_powers / 2.0)
                * (rng.standard_normal((scenario.antennas, scenario.paths))
                   + 1j * rng.standard_normal((scenario.antennas, scenario.paths))))
        delay = int(rng.integers(0, MAX_EXTRA_DELAY + 1))
        delayed = np.concatenate(
            [np.zeros((scenario.antennas, delay), dtype=complex), taps,
             np.zeros((scenario.antennas, MAX_EXTRA_DELAY - delay), dtype=complex)],
            axis=1)
        sessions.append(UeSession(ue_id=i, channel=ChannelMatrix(delayed), true_delay=delay))

    for ue in sessions:
        _step_ue(ue, Event.POWER_ON, 0, trace)

    max_subframes = 80
    for sf in range(max_subframes):
        if all(ue.state is CallState.RELEASED for ue in sessions):
            break
        base = frame_cfg.slots_per_subframe * sf
        ul_slot, dl_slot0, dl_slot1 = base, base + 2, base + 3

        # --- uplink slots: random access attempts and dedicated traffic ---
        transmitting: dict[int, int] = {}
        powers: dict[int, float] = {}
        for ue in sessions:
            if ue.state is CallState.SYSTEM_INFO_ACQUIRED and sf >= ue.backoff_until:
                rng = rng_for(scenario.seed, 200 + ue.ue_id, ue.rach_attempts)
                if scenario.force_rach_collision and ue.rach_attempts == 0:
                    root = scenario.rach_roots[0]
                else:
                    root = int(rng.choice(bch.pilot_roots))
                ue.chosen_root = root
                transmitting[ue.ue_id] = root
                powers[ue.ue_id] = 10.0 ** (ue.tx_power_db / 10.0)
                _step_ue(ue, Event.RACH_SENT, ul_slot, trace)

        outcomes: dict[int, object] = {}
        rach_rx = None
        if transmitting:
            rach_rx = rach_slot_waveform(transmitting,
                                         {ue.ue_id: ue.channel for ue in sessions},
                                         powers, rach_cfg, noise,
                                         rng_for(scenario.seed, 300, sf))
            outcomes = adjudicate_rach(rach_rx, transmitting, bch.pilot_roots, rach_cfg)

        _dedicated_uplink(sessions, scenario, rach_cfg, noise, ul_slot, sf)

        for ue in sessions:
            if ue.state is CallState.RANDOM_ACCESS_SENT:
                _step_ue(ue, Event.AWAIT_ACK, ul_slot, trace)

        # --- downlink slots: acquisition, acknowledgments, call teardown ---
        for ue in sessions:
            if ue.state is CallState.SYNCHRONIZING:
                _acquire_ue(ue, scenario, beacon_cfg, fmt, frame,
                            dl_slot0, dl_slot1, trace, sf)

        for ue in sessions:
            if ue.state is not CallState.ACK_WAIT:
                continue
            outcome = outcomes.get(ue.ue_id)
            if (outcome is not None and outcome.outcome is RachOutcome.DETECTED
                    and _deliver_ack(ue, outcome, rach_rx, rach_cfg, bch, noise,
                                     scenario, sf, dl_slot0, trace)):
                continue
            ue.rach_attempts += 1
            if ue.rach_attempts >= MAX_RACH_ATTEMPTS:
                _step_ue(ue, Event.RETRIES_EXHAUSTED, dl_slot1, trace)
                ue.failure = "rach_retries_exhausted"
            else:
                _step_ue(ue, Event.ACK_TIMEOUT, dl_slot1, trace)
                rng = rng_for(scenario.seed, 500 + ue.ue_id, ue.rach_attempts)
                ue.backoff_until = sf + 1 + int(rng.integers(1, 9))

        for ue in sessions:
            if ue.state is CallState.DEDICATED and ue.dedicated_left <= 0:
                _step_ue(ue, Event.CALL_END, dl_slot1, trace)
                _step_bs(ue, Event.CALL_END, dl_slot1, trace)

    result = ExperimentResult("callsetup", scenario.to_dict())
    for ue in sessions:
        released_ok = ue.state is CallState.RELEASED and ue.failure is None
        result.add(ue.ue_id, "success", float(released_ok))
        result.add(ue.ue_id, "rach_attempts", float(ue.rach_attempts + 1))
        result.add(ue.ue_id, "data_bit_errors", float(ue.data_bit_errors))
        if ue.ta_residuals:
            result.add(ue.ue_id, "ta_residual_max",
                       float(max(abs(r) for r in ue.ta_residuals)))
    result.summarize()
    success = all(ue.state is CallState.RELEASED and ue.failure is None
                  for ue in sessions)
    return CallSetupResult(success=success, trace=trace, sessions=sessions,
                           experiment=result)


def _acquire_ue(ue: UeSession, scenario: Scenario, beacon_cfg, fmt, frame,
                dl_slot0: int, dl_slot1: int, trace: TraceRecorder, sf: int) -> None:
    """One acquisition attempt from this subframe's downlink slots.

    The beacon radiates from the first array element at the advertised
    beacon power, so the capture passes through that antenna's impulse
    response before the receiver sees it.
    """
    rng = rng_for(scenario.seed, 600 + ue.ue_id, sf)
    capture, home_cell, _, _ = make_capture(scenario, rng, home_cell=1, fmt=fmt)
    gain = 10.0 ** (frame.bch.beacon_power_db / 20.0)
    h0 = ChannelMatrix(ue.channel.taps[:1])
    rx = gain * apply_channel(capture, h0)[0]
    report = acquire(rx, beacon_cfg, fmt)
    if report.ok and report.cell_id == home_cell and report.frame == frame:
        ue.measured_beacon_db = 10.0 * np.log10(float(np.mean(np.abs(rx) ** 2)))
        _step_ue(ue, Event.CELL_FOUND, dl_slot0, trace)
        _step_ue(ue, Event.HEADER_FOUND, dl_slot1, trace)
        _step_ue(ue, Event.BCH_DECODED, dl_slot1, trace)
        ue.tx_power_db = open_loop_power(frame.bch.beacon_power_db,
                                         ue.measured_beacon_db,
                                         frame.bch.target_rach_power_db)
        return
    ue.sync_attempts += 1
    if ue.sync_attempts >= MAX_SYNC_ATTEMPTS:
        _step_ue(ue, Event.RETRIES_EXHAUSTED, dl_slot1, trace)
        ue.failure = f"acquisition:{report.failed_stage or 'wrong_cell_or_frame'}"
    else:
        _step_ue(ue, Event.TIMEOUT, dl_slot1, trace)


def _deliver_ack(ue: UeSession, outcome, rach_rx, rach_cfg: RachConfig, bch,
                 noise: float, scenario: Scenario, sf: int, dl_slot: int,
                 trace: TraceRecorder) -> bool:
    """BS answers a detected preamble with a pre-RAKE acknowledgment built
    from the channel it just estimated off the RACH waveform itself."""
    _step_bs(ue, Event.RACH_SENT, dl_slot, trace)
    pilot = zc_generate(ue.chosen_root, rach_cfg.pilot_length)
    est = estimate_channel(rach_rx, pilot, rach_cfg.n_paths,
                           guard=rach_cfg.effective_guard)
    target_lin = 10.0 ** (bch.target_rach_power_db / 10.0)
    correction = int(np.clip(round(10.0 * np.log10(
        max(outcome.rx_power, 1e-12) / target_lin)), -8, 8))
    ack = AckMessage(dedicated_root=dedicated_root_for(ue.ue_id),
                     timing_advance=outcome.timing,
                     power_correction_db=-correction)
    _step_bs(ue, Event.AWAIT_ACK, dl_slot, trace)
    decoded = send_ack(ack, est, ue.channel, noise,
                       rng_for(scenario.seed, 400 + ue.ue_id, sf))
    if decoded is None:
        _step_bs(ue, Event.ACK_TIMEOUT, dl_slot, trace)
        return False
    ue.ack = decoded
    ue.tx_power_db = float(np.clip(ue.tx_power_db + decoded.power_correction_db,
                                   -40.0, 23.0))
    ue.pcs = PowerControlState(current_tx_power_db=ue.tx_power_db,
                               target_sinr_db=10.0)
    _step_ue(ue, Event.ACK_RECEIVED, dl_slot, trace)
    _step_bs(ue, Event.ACK_RECEIVED, dl_slot, trace)
    return True


def _dedicated_uplink(sessions, scenario: Scenario, rach_cfg: RachConfig,
                      noise: float, ul_slot: int, sf: int) -> None:
    """Dedicated-phase uplink: timing-advanced pilot+data bursts, SINR
    measurement and one closed-loop power command per slot."""
    active = [ue for ue in sessions if ue.state is CallState.DEDICATED]
    if not active:
        return
    n_paths = rach_cfg.n_paths
    guard = n_paths - 1
    rx_total = None
    per_ue = {}
    for ue in active:
        rng = rng_for(scenario.seed, 800 + ue.ue_id, sf)
        bits = rng.integers(0, 2, DATA_BITS_PER_SLOT)
        pilot = zc_generate(ue.ack.dedicated_root, DEDICATED_PILOT_LEN)
        pilot_field = cyclic_prefix_pilot(pilot, guard)
        signal = assemble_uplink_burst(
            pilot_field, bits, power=10.0 ** (ue.pcs.current_tx_power_db / 10.0))
        # timing advance: transmit early by the acknowledged offset, which
        # shifts the effective response toward delay zero
        advance = min(ue.ack.timing_advance, ue.true_delay)
        taps = ue.channel.taps
        if advance:
            taps = np.roll(taps, -advance, axis=1).copy()
            taps[:, -advance:] = 0.0
        rx = apply_channel(signal.scaled(), ChannelMatrix(taps))
        per_ue[ue.ue_id] = (bits, pilot)
        rx_total = rx if rx_total is None else rx_total + rx
    if noise > 0:
        rng = rng_for(scenario.seed, 900, sf)
        sigma = np.sqrt(noise / 2.0)
        rx_total = rx_total + sigma * (rng.standard_normal(rx_total.shape)
                                       + 1j * rng.standard_normal(rx_total.shape))
    field_len = DEDICATED_PILOT_LEN + guard
    for ue in active:
        bits, pilot = per_ue[ue.ue_id]
        est = estimate_channel(rx_total, pilot, n_paths, guard=guard)
        ue.ta_residuals.append(timing_advance_from_pdp(estimate_pdp(est)))
        rake = rake_receive(rx_total[:, field_len:], est,
                            n_symbols=DATA_BITS_PER_SLOT)
        decoded = bpsk_hard_decide(rake.soft_symbols)
        ue.data_bit_errors += int(np.count_nonzero(decoded != bits))
        sinr_db = 10.0 * np.log10(max(estimate_sinr(est, rx_total), 1e-12))
        ue.pcs.apply(closed_loop_step(sinr_db, ue.pcs))
        ue.power_history.append(ue.pcs.current_tx_power_db)
        ue.dedicated_left -= 1


def check_callsetup(result: ExperimentResult, scenario: Scenario) -> list[CheckOutcome]:
    rate = result.summary.get("success_mean", 0.0)
    attempts = result.summary.get("rach_attempts_mean", math.inf)
    ok = rate == 1.0 and attempts <= MAX_RACH_ATTEMPTS
    return [CheckOutcome("call setup completion", ok,
                         f"success rate {rate:.2f}, mean attempts {attempts:.1f}")]
