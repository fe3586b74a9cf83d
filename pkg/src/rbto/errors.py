"""Exception types shared across the package."""


class RbtoError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(RbtoError, ValueError):
    """A scalar or array argument is outside its admissible range."""


class StructuralSingularityError(RbtoError):
    """The constrained stiffness matrix is singular (rigid-body modes remain)."""


class NumericError(RbtoError):
    """A numerical routine produced non-finite values or failed to converge."""


class StateMismatchError(RbtoError):
    """A cached solution was passed together with inputs it was not computed for."""


class IllPosedFitError(RbtoError):
    """Least-squares design matrix is rank deficient.

    ``columns`` holds the indices of basis terms that cannot be resolved
    from the given points.
    """

    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class SubproblemError(RbtoError):
    """The MMA subproblem could not be solved; carries the worst constraint index."""

    def __init__(self, message: str, constraint_index: int = -1):
        super().__init__(message)
        self.constraint_index = constraint_index


class ConfigError(RbtoError, ValueError):
    """A run configuration is malformed, out of range, or has unknown keys."""
