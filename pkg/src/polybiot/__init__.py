"""Polygonal-mesh, arbitrary-order solver for quasi-static Biot poroelasticity."""

__version__ = "0.1.0"
