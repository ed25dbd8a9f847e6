"""Scenario configuration: one structured record drives every experiment.

Scenarios load from YAML (JSON works too, YAML being a superset). Unknown
keys are rejected so typos fail loudly with exit code 2 at the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

from .beacon import BeaconConfig
from .channel import PowerDelayProfile
from .errors import ConfigError

_BEACON_DEFAULTS = dict(fft_size=256, cp_len=32, num_cells=7, scts_per_cell=4,
                        guard_bins=16, pct_bin=None)


@dataclass(frozen=True)
class Scenario:
    antennas: int = 64
    users: int = 2
    paths: int = 16
    pdp: str = "uniform"
    other_cell_factor: float = 0.0
    noise_power: float = 0.0
    trials: int = 1000
    seed: int = 0
    symbols_per_trial: int = 128
    # BER experiment
    snr_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 9.6)
    bits_per_snr: int = 1_000_000
    # hardening experiment
    antenna_sweep: tuple[int, ...] = (16, 64, 256)
    hardening_seeds: int = 5
    # beacon acquisition experiment
    beacon: dict = field(default_factory=dict)
    beacon_snr_db: float = 10.0
    timing_offset: int = 37
    fractional_cfo_bins: float = 0.0
    integer_cfo_bins: int = 0
    interferer_rel_db: float = -10.0
    sync_symbols: int = 16
    # call setup experiment
    n_ues: int = 1
    rach_roots: tuple[int, ...] = (3, 7, 11, 19)
    force_rach_collision: bool = False

    def __post_init__(self):
        if self.antennas < 1 or self.users < 1 or self.paths < 1:
            raise ConfigError("antennas, users and paths must all be >= 1")
        if self.other_cell_factor < 0:
            raise ConfigError("other_cell_factor must be >= 0")
        if self.noise_power < 0:
            raise ConfigError("noise_power must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.symbols_per_trial < 1:
            raise ConfigError("symbols_per_trial must be >= 1")
        if self.bits_per_snr < 1:
            raise ConfigError("bits_per_snr must be >= 1")
        if any(m < 1 for m in self.antenna_sweep):
            raise ConfigError("antenna_sweep entries must be >= 1")
        if self.n_ues < 1:
            raise ConfigError("n_ues must be >= 1")
        self.make_pdp()          # validates the pdp spec
        self.beacon_config()      # validates the beacon block
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "antenna_sweep", tuple(int(m) for m in self.antenna_sweep))
        object.__setattr__(self, "rach_roots", tuple(int(r) for r in self.rach_roots))

    def make_pdp(self, paths: int | None = None) -> PowerDelayProfile:
        return PowerDelayProfile.from_spec(self.pdp, paths or self.paths, total_power=1.0)

    def beacon_config(self) -> BeaconConfig:
        merged = dict(_BEACON_DEFAULTS)
        unknown = set(self.beacon) - set(merged)
        if unknown:
            raise ConfigError(f"unknown beacon config keys: {sorted(unknown)}")
        merged.update(self.beacon)
        return BeaconConfig(**merged)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = list(self.snr_db)
        d["antenna_sweep"] = list(self.antenna_sweep)
        d["rach_roots"] = list(self.rach_roots)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a mapping")
        valid = set(cls.__dataclass_fields__)
        unknown = set(data) - valid
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if data is None:
            data = {}
        return cls.from_dict(data)
