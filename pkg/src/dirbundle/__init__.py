"""Numerical direction sets, tangent cones and directional bundles of set germs."""

__version__ = "0.1.0"
