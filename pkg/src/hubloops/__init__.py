"""Continuous-time world-line and loop representations of Hubbard-type models."""

__version__ = "0.1.0"
