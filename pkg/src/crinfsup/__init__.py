"""Crouzeix-Raviart elements on vertex patches: Vandermonde kernels,
divergence right-inverses and discrete inf-sup constants."""

__version__ = "0.1.0"
