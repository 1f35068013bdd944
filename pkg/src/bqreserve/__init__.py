"""Bayesian quantile regression for claims run-off triangles."""

__version__ = "0.1.0"
