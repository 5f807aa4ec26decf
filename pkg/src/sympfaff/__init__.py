"""Pfaffian formulas for symplectic non-Hermitean random matrix ensembles."""

__version__ = "0.1.0"
