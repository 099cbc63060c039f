"""Simulation and bound evaluation for nonadaptive group testing with k = lambda n / log n."""

__version__ = "0.1.0"
