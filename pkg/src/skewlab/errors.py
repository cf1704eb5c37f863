"""Exception types shared across the package."""


class SkewlabError(Exception):
    """Base class for all package errors."""


class ValidationError(SkewlabError):
    """An input object violates a structural requirement.

    Carries a ``details`` dict naming the violated condition.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class ConvergenceError(SkewlabError):
    """An iterative solver hit its cap before reaching tolerance.

    ``history`` holds the last iterates relevant for diagnosis (e.g. the
    final two Rayleigh quotients of a power iteration, or the residual of
    a Newton solve).
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class WindowError(SkewlabError):
    """A computation needs more base-word history than the point carries."""
