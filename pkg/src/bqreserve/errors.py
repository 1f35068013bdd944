"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the command-line front end maps it to (2 config, 3 data, 4 numeric).
"""


class ReserveError(Exception):
    code = "error"
    exit_status = 1

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(ReserveError):
    code = "config_invalid"
    exit_status = 2


class DataError(ReserveError, ValueError):
    code = "invalid_data"
    exit_status = 3


class InvalidDimensionError(DataError):
    code = "invalid_dimension"


class InvalidIndexError(DataError, IndexError):
    code = "invalid_index"


class DomainError(ReserveError, ValueError):
    """Argument outside the mathematical domain of a function."""

    code = "domain_error"
    exit_status = 4


class SupportError(DomainError):
    """Observation outside the support of a density (zero likelihood)."""

    code = "support_violation"


class ParameterError(DomainError):
    code = "invalid_parameter"


class NumericConvergenceError(ReserveError, ArithmeticError):
    code = "numeric_convergence"
    exit_status = 4


class InitializationError(ReserveError):
    code = "initialization"
    exit_status = 4
