"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands with incompatible shapes at a public boundary."""


class ConfigError(ValueError):
    """Invalid configuration value or key."""


class DataError(ValueError):
    """Malformed or out-of-contract data (labels, splits, files)."""


class NumericalError(RuntimeError):
    """Non-finite value escaped a numeric operation or training step."""
