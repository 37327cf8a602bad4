"""Exception hierarchy."""


class SurfphaseError(Exception):
    """Base class for all package errors."""


class GridMismatchError(SurfphaseError, ValueError):
    pass


class NonZeroMeanError(SurfphaseError, ValueError):
    pass


class DomainError(SurfphaseError, ValueError):
    """A concentration left the open interval (0, 1), or a similar domain violation."""


class SizeMismatchError(SurfphaseError, ValueError):
    pass


class SolverError(SurfphaseError, RuntimeError):
    """Nonlinear solve failure. ``history`` holds one dict per Newton iterate."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class NewtonDivergence(SolverError):
    pass


class StepDampedError(SolverError):
    pass


class InvariantViolation(SurfphaseError, AssertionError):
    """Mass, energy or positivity check failed on an accepted step."""


class ConfigError(SurfphaseError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingKeyError(ConfigError):
    def __init__(self, key):
        super().__init__(f"missing required key '{key}'")
        self.key = key


class ManifestMismatchError(SurfphaseError):
    pass
