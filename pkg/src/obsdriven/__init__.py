"""Observation-driven time series with one-parameter exponential family responses."""

from obsdriven.expfamily import Family, FamilySpec
from obsdriven.dynamics import ExpAR, Linear, LinearPQ, Spline

__version__ = "0.1.0"

__all__ = ["Family", "FamilySpec", "Linear", "LinearPQ", "Spline", "ExpAR", "__version__"]
