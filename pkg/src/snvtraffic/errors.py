"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a model function."""


class ConfigError(ValueError):
    """A configuration value or a cross-field constraint is invalid."""


class InvariantViolation(RuntimeError):
    """A discrete invariant of the scheme failed at runtime.

    ``realization`` carries the ensemble member index when known.
    """

    def __init__(self, message, realization=None):
        super().__init__(message)
        self.realization = realization
