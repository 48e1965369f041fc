"""Exception hierarchy shared by every pshlab module."""


class PshlabError(Exception):
    """Base class for all errors raised by pshlab."""


class DomainError(PshlabError, ValueError):
    """An argument lies outside the domain of the operation."""


class DomainMismatchError(DomainError):
    """Two objects that must share a grid do not."""


class UndefinedInputError(DomainError):
    """The operation is undefined on this input (e.g. a collapsed envelope)."""


class PreconditionError(PshlabError):
    """A numerically checked precondition does not hold."""


class ConvergenceFailure(PshlabError):
    """An iterative solver stagnated before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ExtractionExhausted(PshlabError):
    """No admissible subsequence could be found within the available indices."""


class ConfigError(PshlabError):
    """An experiment configuration failed validation."""
