"""Numerical verifier for the Hermitian geometry of trans-Sasakian products."""

__version__ = "0.1.0"
