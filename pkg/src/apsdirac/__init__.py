"""Discrete Dirac evolution on globally hyperbolic model spacetimes with timelike boundary."""

__version__ = "0.1.0"
