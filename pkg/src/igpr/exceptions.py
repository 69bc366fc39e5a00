"""Exception and warning classes raised by igpr."""


class IGPRError(Exception):
    """Base class for all igpr errors."""


class InvalidPointError(IGPRError, ValueError):
    """A value does not lie on the manifold (or in its tangent space)."""


class SingularityError(IGPRError, ValueError):
    """A map is undefined at the given arguments (e.g. antipodal sphere points)."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (sample {index})")
        self.index = index


class ConvergenceError(IGPRError, RuntimeError):
    """An iterative procedure did not converge."""


class ConditioningError(IGPRError, RuntimeError):
    """A covariance matrix could not be factorized."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InitializationError(IGPRError, RuntimeError):
    """Hyperparameter search could not start from the given initial values."""


class OptimizationError(IGPRError, RuntimeError):
    """Every restart of the hyperparameter search failed."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DataError(IGPRError, ValueError):
    """Malformed input data (files, shapes, values)."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConditioningWarning(UserWarning):
    """Covariance is numerically degenerate; extra jitter was applied."""


class ConvergenceWarning(UserWarning):
    """An iterative procedure stopped at its iteration limit."""
