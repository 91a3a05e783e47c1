"""Autocorrelation moments, Stieltjes approximants and decay diagnostics for FPU chains."""

__version__ = "0.1.0"
