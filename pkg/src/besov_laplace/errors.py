"""Exception types shared across the package.

Every error carries a module-qualified ``code`` so the command line can emit
a one-line machine-parsable failure record.
"""


class BesovError(Exception):
    code = "besov.error"

    def __init__(self, message, field=None, code=None):
        super().__init__(message)
        self.field = field
        if code is not None:
            self.code = code


class ConfigurationError(BesovError, ValueError):
    """A configuration value violates a documented constraint."""

    code = "config.invalid"


class DomainError(BesovError, ValueError):
    """An argument lies outside the domain of a function."""

    code = "domain.invalid"


class ShapeError(BesovError, ValueError):
    """Array lengths or index sets do not match."""

    code = "shape.mismatch"


class UsageError(BesovError, ValueError):
    code = "usage.invalid"


class NumericError(BesovError, ArithmeticError):
    code = "numeric.degenerate"


class StudyError(BesovError, RuntimeError):
    """Too many replicates of a rate study failed."""

    code = "experiment.excluded"
