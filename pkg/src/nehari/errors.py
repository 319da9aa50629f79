"""Exception hierarchy shared by all modules."""


class NehariError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(NehariError, ValueError):
    """Problem parameters violate a structural requirement."""


class AssumptionError(ConfigurationError):
    """A weight function violates one of the positivity assumptions on f or g."""


class ConfigParseError(ConfigurationError):
    """The run configuration document is malformed or has unknown keys."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class PreconditionError(NehariError, ValueError):
    """An operation was called outside of its domain of definition."""


class InadmissibleStartError(PreconditionError):
    """The starting direction cannot be projected onto the requested branch."""


class ConvergenceError(NehariError, RuntimeError):
    """An iterative method stopped without meeting its tolerance.

    ``last`` carries the final iterate (or partial result) for diagnostics.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
