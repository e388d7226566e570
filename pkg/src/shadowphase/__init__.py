"""Quantum phase classification from classical shadows of randomly evolved states."""

__version__ = "0.1.0"
