"""Simulator for multipath division multiple access over massive arrays:
channel statistics, RAKE/pre-RAKE links, the beacon control plane, the
call-setup protocol, and Monte Carlo experiment runners."""

__version__ = "0.1.0"

from .channel import (ChannelGenConfig, ChannelMatrix, PowerDelayProfile,
                      apply_channel, generate_channel, interference_cross_energy,
                      normalized_self_energy, row_cross_correlation)
from .errors import ConfigError, DegenerateInputError, FramingError
from .scenario import Scenario

__all__ = [
    "ChannelGenConfig", "ChannelMatrix", "PowerDelayProfile",
    "apply_channel", "generate_channel", "interference_cross_energy",
    "normalized_self_energy", "row_cross_correlation",
    "ConfigError", "DegenerateInputError", "FramingError",
    "Scenario", "__version__",
]
