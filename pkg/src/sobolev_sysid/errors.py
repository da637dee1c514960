"""Exception hierarchy shared across the toolkit."""


class SysIdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SysIdError, ValueError):
    """Invalid run configuration."""


class DimensionError(SysIdError, ValueError):
    """Array shapes or indices are inconsistent."""


class MissingChannelError(SysIdError, KeyError):
    """A derivative channel was requested but is not present in the data."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NumericalError(SysIdError, ArithmeticError):
    """Non-finite values, blow-up or ill-conditioning."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleError(SysIdError):
    """The norm-ball constrained problem has no solution.

    Raised when the prior assumptions are falsified: no coefficient vector
    over the chosen basis is consistent with the noise bounds.
    """

    def __init__(self, message, report=None, residuals=None):
        super().__init__(message)
        self.report = report
        self.residuals = residuals


class RankDeficientError(NumericalError):
    """A local least-squares problem does not have a unique solution."""

    def __init__(self, message, index=None, condition=None):
        super().__init__(message)
        self.index = index
        self.condition = condition
