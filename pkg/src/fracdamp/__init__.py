"""Diffusive fractional boundary damping for coupled 1D wave equations."""

__version__ = "0.1.0"
