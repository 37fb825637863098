"""Cluster-level hazard inference with entity-level stochastic realization."""

__version__ = "0.1.0"
