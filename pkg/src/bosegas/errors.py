"""Exception types; each maps to a CLI exit code."""


class BoseGasError(Exception):
    exit_code = 1


class ConfigError(BoseGasError, ValueError):
    """Bad geometry string, parameters or config file."""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain of a function (t <= 0, point outside the box, ...)."""


class InfeasibleError(BoseGasError):
    """Target cannot be reached, e.g. a density above the untilted mean or conditioning on a null event."""

    exit_code = 3


class ToleranceError(BoseGasError):
    """A numerical procedure or acceptance check missed its tolerance."""

    exit_code = 4


class CacheCorruptionError(BoseGasError):
    exit_code = 5


class UnsupportedError(ConfigError):
    """Combination the model or its predictions do not cover."""
