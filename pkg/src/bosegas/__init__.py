"""Exact finite-size numerics for the critical free Bose gas in its loop representation."""

__version__ = "0.1.0"
