"""Finite-dimensional approximation of the Wasserstein diffusion on [0, 1]."""

__version__ = "0.1.0"
