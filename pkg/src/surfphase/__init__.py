"""Convex-splitting finite-difference solver for the binary fluid-surfactant phase-field model."""

__version__ = "0.1.0"
