"""Conformal scattering laboratory for the cubic wave equation on a compactified Schwarzschild exterior."""

__version__ = "0.1.0"
