"""Exception types shared across the package.

Each type maps to one failure class so callers (and the CLI exit-code
table) can tell configuration mistakes, bad data, shape bugs and numerical
blowups apart without parsing messages.
"""


class QivcError(Exception):
    """Base class for all package errors."""


class ConfigError(QivcError):
    """Invalid or inconsistent configuration value."""


class DataError(QivcError):
    """Missing, malformed or unusable input data."""


class ShapeError(QivcError):
    """Tensor or array arguments with incompatible shapes."""


class GraphError(QivcError):
    """Misuse of the autodiff graph (e.g. backward from a detached node)."""


class NumericalError(QivcError):
    """Non-finite values or rank deficiency where full rank is required."""
