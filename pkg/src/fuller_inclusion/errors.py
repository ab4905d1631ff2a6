"""Exception types raised across the package."""


class FullerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FullerError, ValueError):
    """Non-finite or malformed numeric input."""


class DomainError(FullerError, ValueError):
    """Input outside the domain where an operation is defined."""


class ContractError(FullerError, ValueError):
    """A documented precondition was violated by the caller."""


class CalibrationError(FullerError, RuntimeError):
    """The quasi-Lyapunov parameters do not satisfy a required inequality.

    ``report`` holds the :class:`~fuller_inclusion.lyapunov.QlfReport` of the
    failing run when one is available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CoverageError(FullerError, RuntimeError):
    """A point of the good set is not covered by any cell of a partition."""


class CertificateViolation(FullerError, RuntimeError):
    """The quasi-Lyapunov rate inequality fails for a cell's velocity."""


class NonConvergenceError(FullerError, RuntimeError):
    """A sequence of approximate solutions failed the Cauchy test."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
