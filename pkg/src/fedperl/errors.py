"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, architecture, or partition plan."""


class ShapeError(ValueError):
    """Array or model shapes do not line up."""


class NumericError(FloatingPointError):
    """NaN/Inf encountered in inputs or produced by an update."""
