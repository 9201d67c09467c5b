"""Exception types shared across the package."""


class RaresumError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(RaresumError):
    """Invalid user-supplied configuration (bad parameters, empty region, ...)."""


class DomainError(RaresumError):
    """A tilt vector lies outside the cumulant domain."""

    def __init__(self, message, coord=None):
        super().__init__(message)
        self.coord = coord


class NumericError(RaresumError):
    """A numerical operation produced an unusable result (e.g. non-PD Hessian)."""


class SteepnessError(RaresumError):
    """The tilting equation m(t) = alpha has no reachable solution."""


class BaselineUnavailable(RaresumError):
    """The state-independent baseline cannot be set up (no dominating point)."""


class PathAbort(RaresumError):
    """A run had to be abandoned mid-generation; carries the failing step index."""

    def __init__(self, step, reason=""):
        super().__init__(f"path aborted at step {step}: {reason}")
        self.step = step
        self.reason = reason
