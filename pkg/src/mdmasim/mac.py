"""TDD frame structure, power control, random access and the call-setup
state machines on both sides of the link.

The user-side machine walks power-on -> synchronization -> cell selection ->
frame sync -> system information -> random access -> acknowledgment ->
dedicated channel -> release. Retry bookkeeping stays in the contexts; the
transition tables themselves are pure functions of (state, event), with
illegal events logged and ignored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import ChannelMatrix, apply_channel
from .downlink import prerake_weights, transmit_downlink, user_receive
from .errors import ConfigError, DegenerateInputError
from .frames import _bits_to_int, _int_to_bits, crc16
from .uplink import estimate_channel, estimate_pdp, timing_advance_from_pdp
from .waveform import ZcSequence, assemble_uplink_burst, cyclic_prefix_pilot, zc_generate

logger = logging.getLogger(__name__)

UL, DL = "UL", "DL"
SLOT_PATTERN = (UL, UL, DL, DL)  # fixed subframe layout: two up, two down


@dataclass(frozen=True)
class FrameConfig:
    subframes_per_frame: int
    samples_per_slot: int

    def __post_init__(self):
        if self.subframes_per_frame < 1:
            raise ConfigError("subframes_per_frame must be >= 1")
        if self.samples_per_slot < 1:
            raise ConfigError("samples_per_slot must be >= 1")

    @property
    def slots_per_subframe(self) -> int:
        return len(SLOT_PATTERN)

    def slot_direction(self, slot_index: int) -> str:
        return SLOT_PATTERN[slot_index % len(SLOT_PATTERN)]


class CallState(Enum):
    POWER_OFF = "PowerOff"
    SYNCHRONIZING = "Synchronizing"
    CELL_SELECTED = "CellSelected"
    FRAME_SYNCED = "FrameSynced"
    SYSTEM_INFO_ACQUIRED = "SystemInfoAcquired"
    RANDOM_ACCESS_SENT = "RandomAccessSent"
    ACK_WAIT = "AckWait"
    DEDICATED = "Dedicated"
    RELEASED = "Released"


class Event(Enum):
    POWER_ON = "PowerOn"
    CELL_FOUND = "CellFound"
    HEADER_FOUND = "HeaderFound"
    BCH_DECODED = "BchDecoded"
    RACH_SENT = "RachSent"
    AWAIT_ACK = "AwaitAck"
    ACK_RECEIVED = "AckReceived"
    ACK_TIMEOUT = "AckTimeout"
    RETRIES_EXHAUSTED = "RetriesExhausted"
    SYNC_LOST = "SyncLost"
    TIMEOUT = "Timeout"
    CALL_END = "CallEnd"


# The golden path visits every state once, in declaration order. Timeouts
# push acquisition states back to scanning and access states back to a new
# random-access attempt; exhaustion is signalled explicitly by the caller so
# the table stays a pure (state, event) function.
UE_TRANSITIONS: dict[tuple[CallState, Event], CallState] = {
    (CallState.POWER_OFF, Event.POWER_ON): CallState.SYNCHRONIZING,
    (CallState.SYNCHRONIZING, Event.CELL_FOUND): CallState.CELL_SELECTED,
    (CallState.SYNCHRONIZING, Event.TIMEOUT): CallState.SYNCHRONIZING,
    (CallState.SYNCHRONIZING, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.CELL_SELECTED, Event.HEADER_FOUND): CallState.FRAME_SYNCED,
    (CallState.CELL_SELECTED, Event.TIMEOUT): CallState.SYNCHRONIZING,
    (CallState.CELL_SELECTED, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.FRAME_SYNCED, Event.BCH_DECODED): CallState.SYSTEM_INFO_ACQUIRED,
    (CallState.FRAME_SYNCED, Event.TIMEOUT): CallState.SYNCHRONIZING,
    (CallState.FRAME_SYNCED, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.SYSTEM_INFO_ACQUIRED, Event.RACH_SENT): CallState.RANDOM_ACCESS_SENT,
    (CallState.SYSTEM_INFO_ACQUIRED, Event.TIMEOUT): CallState.SYNCHRONIZING,
    (CallState.SYSTEM_INFO_ACQUIRED, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.RANDOM_ACCESS_SENT, Event.AWAIT_ACK): CallState.ACK_WAIT,
    (CallState.RANDOM_ACCESS_SENT, Event.TIMEOUT): CallState.SYSTEM_INFO_ACQUIRED,
    (CallState.RANDOM_ACCESS_SENT, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.ACK_WAIT, Event.ACK_RECEIVED): CallState.DEDICATED,
    (CallState.ACK_WAIT, Event.ACK_TIMEOUT): CallState.SYSTEM_INFO_ACQUIRED,
    (CallState.ACK_WAIT, Event.TIMEOUT): CallState.SYSTEM_INFO_ACQUIRED,
    (CallState.ACK_WAIT, Event.RETRIES_EXHAUSTED): CallState.RELEASED,
    (CallState.DEDICATED, Event.CALL_END): CallState.RELEASED,
    (CallState.DEDICATED, Event.SYNC_LOST): CallState.SYNCHRONIZING,
    (CallState.DEDICATED, Event.TIMEOUT): CallState.RELEASED,
}

GOLDEN_PATH = [
    (Event.POWER_ON, CallState.SYNCHRONIZING),
    (Event.CELL_FOUND, CallState.CELL_SELECTED),
    (Event.HEADER_FOUND, CallState.FRAME_SYNCED),
    (Event.BCH_DECODED, CallState.SYSTEM_INFO_ACQUIRED),
    (Event.RACH_SENT, CallState.RANDOM_ACCESS_SENT),
    (Event.AWAIT_ACK, CallState.ACK_WAIT),
    (Event.ACK_RECEIVED, CallState.DEDICATED),
    (Event.CALL_END, CallState.RELEASED),
]


class BsCallState(Enum):
    IDLE = "Idle"
    RACH_DETECTED = "RachDetected"
    ACK_SENT = "AckSent"
    DEDICATED = "Dedicated"
    RELEASED = "Released"


BS_TRANSITIONS: dict[tuple[BsCallState, Event], BsCallState] = {
    (BsCallState.IDLE, Event.RACH_SENT): BsCallState.RACH_DETECTED,
    (BsCallState.RACH_DETECTED, Event.AWAIT_ACK): BsCallState.ACK_SENT,
    (BsCallState.ACK_SENT, Event.ACK_RECEIVED): BsCallState.DEDICATED,
    (BsCallState.ACK_SENT, Event.ACK_TIMEOUT): BsCallState.IDLE,
    (BsCallState.ACK_SENT, Event.TIMEOUT): BsCallState.IDLE,
    (BsCallState.DEDICATED, Event.CALL_END): BsCallState.RELEASED,
    (BsCallState.DEDICATED, Event.SYNC_LOST): BsCallState.IDLE,
    (BsCallState.DEDICATED, Event.TIMEOUT): BsCallState.RELEASED,
}


def fsm_step(state: CallState, event: Event) -> CallState:
    """Advance the user-side machine; illegal events are logged no-ops."""
    next_state = UE_TRANSITIONS.get((state, event))
    if next_state is None:
        logger.warning("protocol warning: event %s ignored in state %s",
                       event.value, state.value)
        return state
    return next_state


def bs_fsm_step(state: BsCallState, event: Event) -> BsCallState:
    next_state = BS_TRANSITIONS.get((state, event))
    if next_state is None:
        logger.warning("protocol warning: event %s ignored in BS state %s",
                       event.value, state.value)
        return state
    return next_state


def is_legal(state: CallState, event: Event) -> bool:
    return (state, event) in UE_TRANSITIONS


class TraceRecorder:
    """Accumulates protocol transitions in the stable line schema
    ``slot,entity,state,event,next_state``."""

    def __init__(self):
        self.rows: list[tuple[int, str, str, str, str]] = []

    def record(self, slot: int, entity: str, state, event, next_state) -> None:
        self.rows.append((slot, entity, state.value, event.value, next_state.value))

    def render(self) -> str:
        return "".join(f"{s},{e},{st},{ev},{nx}\n" for s, e, st, ev, nx in self.rows)

    def states_visited(self, entity: str) -> list[str]:
        seen = []
        for _, ent, state, _, nxt in self.rows:
            if ent != entity:
                continue
            if not seen:
                seen.append(state)
            if not seen or seen[-1] != nxt:
                seen.append(nxt)
        return seen


@dataclass
class PowerControlState:
    current_tx_power_db: float
    target_sinr_db: float
    step_db: float = 1.0
    min_power_db: float = -40.0
    max_power_db: float = 23.0

    def __post_init__(self):
        if self.step_db <= 0:
            raise ConfigError("step_db must be > 0")
        if not self.min_power_db <= self.current_tx_power_db <= self.max_power_db:
            raise ConfigError("initial power outside [min, max]")

    def apply(self, command_db: float) -> float:
        self.current_tx_power_db = float(np.clip(self.current_tx_power_db + command_db,
                                                 self.min_power_db, self.max_power_db))
        return self.current_tx_power_db


def open_loop_power(beacon_tx_power_db: float, measured_beacon_rx_power_db: float,
                    target_rach_rx_power_db: float,
                    min_power_db: float = -40.0, max_power_db: float = 23.0) -> float:
    """Random-access transmit power from the beacon path-loss estimate,
    clamped to the terminal's power bounds."""
    for v in (beacon_tx_power_db, measured_beacon_rx_power_db, target_rach_rx_power_db):
        if not np.isfinite(v):
            raise ConfigError("power control inputs must be finite")
    path_loss = beacon_tx_power_db - measured_beacon_rx_power_db
    return float(np.clip(target_rach_rx_power_db + path_loss, min_power_db, max_power_db))


def closed_loop_step(measured_sinr_db: float, pcs: PowerControlState) -> float:
    """Bang-bang command: up one step below target, down otherwise (a tie
    steps down)."""
    return pcs.step_db if measured_sinr_db < pcs.target_sinr_db else -pcs.step_db


# ---------------------------------------------------------------------------
# Random access and acknowledgment
# ---------------------------------------------------------------------------

class RachOutcome(Enum):
    DETECTED = "Detected"
    MISSED = "Missed"
    COLLISION = "Collision"


@dataclass(frozen=True)
class RachDetection:
    outcome: RachOutcome
    root: int | None = None
    timing: int | None = None
    rx_power: float | None = None


@dataclass(frozen=True)
class RachConfig:
    pilot_length: int = 139
    n_paths: int = 8
    guard: int | None = None
    detection_threshold: float = 0.0  # channel-energy threshold; calibrate first

    @property
    def effective_guard(self) -> int:
        return self.n_paths - 1 if self.guard is None else self.guard

    @property
    def field_len(self) -> int:
        return self.pilot_length + self.effective_guard


def rach_burst(root: int, cfg: RachConfig, power: float = 1.0) -> np.ndarray:
    """The random-access preamble: a cyclic-prefixed pilot at the open-loop
    power, no data field."""
    pilot = zc_generate(root, cfg.pilot_length)
    fieldsamples = cyclic_prefix_pilot(pilot, cfg.effective_guard)
    return np.sqrt(power) * fieldsamples


def detect_rach(rx: np.ndarray, candidate_roots, cfg: RachConfig) -> list[RachDetection]:
    """Run the pilot detector for every advertised root over one RACH window.

    A root is declared present when its estimated channel energy exceeds the
    calibrated threshold; detections report the first-path timing and the
    per-antenna received power for the initial corrections in the ack.
    """
    detections = []
    for root in candidate_roots:
        pilot = zc_generate(root, cfg.pilot_length)
        est = estimate_channel(rx, pilot, cfg.n_paths, guard=cfg.effective_guard)
        energy = est.total_energy()
        if energy > cfg.detection_threshold:
            try:
                timing = timing_advance_from_pdp(estimate_pdp(est))
            except DegenerateInputError:
                timing = 0
            detections.append(RachDetection(RachOutcome.DETECTED, root=root,
                                            timing=timing,
                                            rx_power=energy / est.antenna_count))
        else:
            detections.append(RachDetection(RachOutcome.MISSED, root=root))
    return detections


def calibrate_rach_threshold(cfg: RachConfig, antenna_count: int, noise_power: float,
                             trials: int, seed: int, false_alarm: float = 0.01) -> float:
    """Detection threshold with the requested false-alarm rate on noise-only
    input: the (1 - fa) quantile of the channel-energy statistic over seeded
    noise trials."""
    if trials < 100:
        raise ConfigError("need >= 100 trials to place a percentile threshold")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pilot = zc_generate(1, cfg.pilot_length)
    sigma = np.sqrt(noise_power / 2.0)
    energies = np.empty(trials)
    for t in range(trials):
        noise = sigma * (rng.standard_normal((antenna_count, cfg.field_len))
                         + 1j * rng.standard_normal((antenna_count, cfg.field_len)))
        est = estimate_channel(noise, pilot, cfg.n_paths, guard=cfg.effective_guard)
        energies[t] = est.total_energy()
    return float(np.quantile(energies, 1.0 - false_alarm))


def rach_slot_waveform(transmitting_roots: dict[int, int],
                       channels: dict[int, ChannelMatrix],
                       powers: dict[int, float], cfg: RachConfig,
                       noise_power: float, rng: np.random.Generator) -> np.ndarray:
    """Superpose every transmitting user's preamble at the array, plus noise."""
    first_channel = next(iter(channels.values()))
    m = first_channel.antenna_count
    rx_len = cfg.field_len + cfg.n_paths - 1
    rx = np.zeros((m, rx_len), dtype=complex)
    for ue_id, root in transmitting_roots.items():
        tx = rach_burst(root, cfg, power=powers[ue_id])
        rx += apply_channel(tx, channels[ue_id])[:, :rx_len]
    if noise_power > 0.0:
        sigma = np.sqrt(noise_power / 2.0)
        rx += sigma * (rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape))
    return rx


def adjudicate_rach(rx: np.ndarray, transmitting_roots: dict[int, int],
                    candidate_roots, cfg: RachConfig) -> dict[int, RachDetection]:
    """Detection plus collision rules for one slot's received waveform.

    Users that picked the same root in the same slot collide: neither is
    served even if the combined energy trips the detector (no capture).
    """
    detections = {d.root: d for d in detect_rach(rx, candidate_roots, cfg)
                  if d.outcome is RachOutcome.DETECTED}
    root_users: dict[int, list[int]] = {}
    for ue_id, root in transmitting_roots.items():
        root_users.setdefault(root, []).append(ue_id)

    outcomes: dict[int, RachDetection] = {}
    for root, users in root_users.items():
        if len(users) > 1:
            for ue_id in users:
                outcomes[ue_id] = RachDetection(RachOutcome.COLLISION, root=root)
        elif root in detections:
            outcomes[users[0]] = detections[root]
        else:
            outcomes[users[0]] = RachDetection(RachOutcome.MISSED, root=root)
    return outcomes


def random_access(transmitting_roots: dict[int, int], channels: dict[int, ChannelMatrix],
                  powers: dict[int, float], cfg: RachConfig, candidate_roots,
                  noise_power: float, rng: np.random.Generator) -> dict[int, RachDetection]:
    """One whole RACH slot: waveform synthesis, detection, adjudication.

    Returns an outcome per transmitting user id.
    """
    if not transmitting_roots:
        return {}
    rx = rach_slot_waveform(transmitting_roots, channels, powers, cfg,
                            noise_power, rng)
    return adjudicate_rach(rx, transmitting_roots, candidate_roots, cfg)


# Acknowledgment payload: 8-bit dedicated root, 8-bit timing advance,
# 8-bit signed power correction, 16-bit CRC.
ACK_BITS = 8 + 8 + 8 + 16


@dataclass(frozen=True)
class AckMessage:
    dedicated_root: int
    timing_advance: int
    power_correction_db: int


def encode_ack(ack: AckMessage) -> np.ndarray:
    bits = _int_to_bits(ack.dedicated_root, 8)
    bits += _int_to_bits(ack.timing_advance, 8)
    bits += _int_to_bits(ack.power_correction_db, 8, signed=True)
    bits += _int_to_bits(crc16(bits), 16)
    return np.array(bits, dtype=int)


def decode_ack(bits) -> AckMessage | None:
    """Parse an ack bit block; None on checksum failure (the user retries)."""
    bits = np.asarray(bits, dtype=int)
    if bits.size != ACK_BITS:
        return None
    body, crc_bits = bits[:-16], bits[-16:]
    if crc16(body) != _bits_to_int(crc_bits):
        return None
    return AckMessage(dedicated_root=_bits_to_int(body[0:8]),
                      timing_advance=_bits_to_int(body[8:16]),
                      power_correction_db=_bits_to_int(body[16:24], signed=True))


def send_ack(ack: AckMessage, est, true_channel: ChannelMatrix,
             noise_power: float, rng: np.random.Generator,
             symbol_spacing: int | None = None) -> AckMessage | None:
    """Transmit the ack over the pre-RAKE downlink and decode it at the user.

    The precoder is built from the uplink channel estimate (reciprocity);
    the user samples at the center-tap timing and checks the CRC. Returns
    the decoded message, or None when the user fails to decode.
    """
    n = est.path_count
    spacing = n if symbol_spacing is None else symbol_spacing
    bits = encode_ack(ack)
    weights = prerake_weights(est)
    antennas = transmit_downlink(bits, weights, symbol_spacing=spacing)
    rx = np.zeros(antennas.shape[1] + n - 1, dtype=complex)
    for m in range(true_channel.antenna_count):
        rx += np.convolve(antennas[m], true_channel.taps[m])
    if noise_power > 0.0:
        sigma = np.sqrt(noise_power / 2.0)
        rx += sigma * (rng.standard_normal(rx.size) + 1j * rng.standard_normal(rx.size))
    decoded_bits = user_receive(rx, first_peak=n - 1, n_symbols=bits.size,
                                symbol_spacing=spacing)
    return decode_ack(decoded_bits)
