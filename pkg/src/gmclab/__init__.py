"""Numerical laboratory for Gaussian multiplicative chaos built on mollified log-correlated fields."""

__version__ = "0.1.0"
