"""Numerical lab for Hermitian metric flows on complex tori."""

__version__ = "0.1.0"
