"""Finite-element induction heating of a moving conductor on a fixed mesh."""

__version__ = "0.1.0"
