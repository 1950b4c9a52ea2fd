"""Numerical laboratory for the anomaly flow of Hermitian metrics on a flat complex 3-torus."""

__version__ = "0.1.0"
