"""Numerical laboratory for lattice Gaussian fields, integer height models and the Villain model."""
__version__ = "0.1.0"
