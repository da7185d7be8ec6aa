"""Exception types raised across the package."""


class CatchError(Exception):
    """Base class for all package errors."""


class InvalidConfiguration(CatchError, ValueError):
    pass


class InvalidStep(CatchError, ValueError):
    pass


class NumericalFailure(CatchError, ArithmeticError):
    pass


class EstimationFailure(CatchError):
    pass


class OutOfHorizon(CatchError, ValueError):
    pass


class NoCapturePlan(CatchError):
    """No grid time admits a feasible catch configuration."""


class SafetyStop(CatchError):
    """Raised when the post-catch QP cannot be solved.

    ``log`` carries whatever rollout was produced before the stop.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log if log is not None else []


class InvalidDim(CatchError, ValueError):
    pass


class TrainingDiverged(CatchError):
    def __init__(self, epoch):
        super().__init__(f"loss became NaN at epoch {epoch}")
        self.epoch = epoch


class InvalidTrack(CatchError, ValueError):
    pass


class SamplingExhausted(CatchError):
    pass


class ParseError(CatchError, ValueError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line
