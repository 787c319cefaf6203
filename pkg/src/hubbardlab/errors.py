"""Exception hierarchy shared by all modules."""


class HubbardLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HubbardLabError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class PreconditionError(HubbardLabError, ValueError):
    """A documented precondition of an operation is violated."""


class ConvergenceError(HubbardLabError, RuntimeError):
    """An iterative procedure did not converge.

    Attributes
    ----------
    iterates : tuple
        The last two iterates (or whatever the caller needs to diagnose the
        failure).
    """

    def __init__(self, message, iterates=()):
        super().__init__(message)
        self.iterates = tuple(iterates)


class InvariantError(HubbardLabError, AssertionError):
    """A checked invariant failed. ``check`` names the failing check."""

    def __init__(self, check, message=""):
        super().__init__(f"{check}: {message}" if message else check)
        self.check = check


class CapExceededError(HubbardLabError, MemoryError):
    """Requested problem size is above the configured cap."""


class SingularMatrixError(HubbardLabError, ArithmeticError):
    """A matrix that has to be inverted is (numerically) singular."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class ConstructionError(HubbardLabError, ValueError):
    """An object could not be built with the requested parameters."""


class RegimeError(HubbardLabError, ValueError):
    """Parameters fall outside the regime an estimate is valid in."""


class MixingError(HubbardLabError, RuntimeError):
    """A Markov chain failed to mix (acceptance too low)."""
