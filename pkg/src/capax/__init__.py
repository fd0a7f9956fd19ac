"""Numerical workbench for weighted local potential theory on grids."""

__version__ = "0.1.0"
