"""Partially wrapped conditional copula regression for spatial cylindrical data."""

__version__ = "0.1.0"
