"""Density of the supremum of a strictly stable Levy process for irrational alpha."""

__version__ = "0.1.0"
