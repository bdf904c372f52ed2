"""Matching function equilibrium models with partial assignment."""

__version__ = "0.1.0"
