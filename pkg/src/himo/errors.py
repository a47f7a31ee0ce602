"""Exception hierarchy shared by every module."""


class HimoError(Exception):
    """Base class for all package errors."""


class ValidationError(HimoError, ValueError):
    """Input violates a documented precondition."""


class ConvergenceError(HimoError):
    """An iterative numerical routine failed to converge."""


class TrainingError(HimoError):
    """Training aborted (for example a non-finite gradient)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
