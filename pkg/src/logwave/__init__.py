"""Penalized Galerkin simulation of the logarithmic wave equation on expanding 1D domains."""

__version__ = "0.1.0"
