"""Odd-symmetric 2D Euler flow on the unit disk: solver and growth diagnostics."""

__version__ = "0.1.0"
