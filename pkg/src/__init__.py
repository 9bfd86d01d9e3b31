"""Synthetic monitoring stations: grid-wide air-quality estimation from monitoring networks."""

__version__ = "1.0.0"
