class NashError(Exception):
    """Base class for every error raised by the simulator.

    ``exit_code`` is the category code the management commands exit with.
    """

    exit_code = 1


class DimensionMismatch(NashError, ValueError):
    exit_code = 2


class RowSumError(NashError):
    exit_code = 3


class ZeroDiagonal(NashError):
    exit_code = 3


class InvalidWeights(NashError):
    exit_code = 3


class NotStronglyConnected(NashError):
    exit_code = 3


class ConvergenceFailure(NashError):
    exit_code = 4


class SpectralError(NashError):
    exit_code = 4


class NotStronglyMonotone(NashError):
    exit_code = 5


class InvalidParticipation(NashError):
    exit_code = 5


class NoAdmissibleStep(NashError):
    exit_code = 6


class NonFiniteState(NashError):
    """Raised when an iterate stops being finite (step size too large)."""

    exit_code = 7

    def __init__(self, message, iteration=None, last_state=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_state = last_state
        self.trace = trace


class ConfigError(NashError):
    """Invalid experiment configuration; ``errors`` maps dotted keys to messages."""

    exit_code = 8

    def __init__(self, errors: dict):
        self.errors = errors
        super().__init__(
            "; ".join(f"{key}: {message}" for key, message in errors.items())
        )
