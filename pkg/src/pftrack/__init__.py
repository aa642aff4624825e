"""Particle-filter tracking lab: single- and multi-target filters, a
scenario simulator and a Monte Carlo harness."""

from .errors import (
    ConfigError,
    DegenerateAssociationError,
    DegenerateGeometryError,
    DegenerateWeightsError,
    InvalidArgumentError,
    InvalidHypothesisError,
    NumericError,
    TrackingError,
)

__version__ = "0.1.0"
