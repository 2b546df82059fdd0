"""Exception types shared across the package."""


class ColoredDriftError(Exception):
    """Base class for all package errors."""


class UnstableMatrixError(ColoredDriftError):
    """A matrix required to have eigenvalues with positive real part does not."""


class ErgodicityError(ColoredDriftError):
    """Model parameters violate an ergodicity condition."""


class AssumptionError(ColoredDriftError):
    """A standing dissipativity assumption cannot hold for the given constants."""


class StabilityError(ColoredDriftError):
    """The time step is too large for the scheme to be stable."""


class SimulationError(ColoredDriftError):
    """A simulation produced a non-finite state.

    The attribute ``step`` holds the index of the offending time step.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GramSingularError(ColoredDriftError):
    """The Gram matrix of an estimator is numerically singular."""


class ConfigError(ColoredDriftError):
    """A run configuration is invalid."""
