"""Exception hierarchy. CLI exit codes are attached to each class."""


class RandError(Exception):
    exit_code = 1


class ArgumentError(RandError, ValueError):
    exit_code = 2


class FormatError(RandError, ValueError):
    exit_code = 3


class ConsistencyError(RandError, ValueError):
    exit_code = 3


class CapacityError(RandError, ValueError):
    exit_code = 3


class UndefinedMetricError(RandError, ValueError):
    exit_code = 3


class NumericError(RandError, ArithmeticError):
    exit_code = 4
