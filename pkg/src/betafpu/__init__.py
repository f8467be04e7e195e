"""Simulation and spectral analysis of the periodic beta-FPU chain."""

__version__ = "0.1.0"
