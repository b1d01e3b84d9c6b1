"""Numerical laboratory for the axisymmetric harmonic dipole and its incompressible recovery maps."""

__version__ = "0.1.0"
