"""Exception types raised across the package."""


class TrackingError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TrackingError, ValueError):
    pass


class DegenerateGeometryError(TrackingError, ValueError):
    """Target and sensor positions coincide, so range/bearing is undefined."""


class NumericError(TrackingError, ArithmeticError):
    """A matrix factorization or inversion failed."""


class DegenerateWeightsError(TrackingError, ArithmeticError):
    """Every importance weight is zero (log-weight -inf or NaN).

    Filters catch this, fall back to the predicted particle cloud with
    uniform weights, and count the event.
    """

    def __init__(self, message="all importance weights are zero", partition=None):
        if partition is not None:
            message = f"{message} (partition {partition})"
        super().__init__(message)
        self.partition = partition


class InvalidHypothesisError(TrackingError, ValueError):
    pass


class DegenerateAssociationError(TrackingError, ArithmeticError):
    """No association hypothesis has non-zero posterior probability."""


class ConfigError(TrackingError, ValueError):
    pass
