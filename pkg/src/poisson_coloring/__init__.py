"""Nearest-neighbour Poissonian coloring of [0,1]^d: simulation and analysis."""

__version__ = "0.1.0"
