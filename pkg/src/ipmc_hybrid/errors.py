"""Exception hierarchy shared by all modules.

Each class maps to one CLI exit code (see ``ipmc_hybrid.cli``).
"""


class HybridError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HybridError, ValueError):
    exit_code = 2


class ParameterDomainError(ConfigError):
    """A physical or algorithmic parameter is outside its valid domain."""

    def __init__(self, field, value, requirement):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r} must be {requirement}")


class DataError(HybridError, ValueError):
    exit_code = 3


class EmptyDatasetError(DataError):
    pass


class DegenerateTargetError(DataError):
    pass


class NumericError(HybridError, ArithmeticError):
    exit_code = 4


class EstimationError(NumericError):
    pass
