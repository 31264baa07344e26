"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LanecoopError(Exception):
    exit_code = 1


class ConfigError(LanecoopError, ValueError):
    exit_code = 2


class ShapeError(ConfigError):
    """Array dimensions do not chain."""


class FormatError(LanecoopError, ValueError):
    exit_code = 3


class DomainError(LanecoopError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = 3


class InputError(LanecoopError, ValueError):
    exit_code = 3


class NumericError(LanecoopError, ArithmeticError):
    exit_code = 4
