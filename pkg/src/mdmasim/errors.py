"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration value (dimensions, powers, unsupported options)."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but degenerate (zero-energy rows, all-zero profiles)."""


class FramingError(ValueError):
    """Signal or bitstream too short / misaligned for the requested operation."""
