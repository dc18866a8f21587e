"""Orbital optimization of single-determinant overlaps with correlated states."""

__version__ = "0.1.0"
