"""Radial numerical toolkit for the focusing NLS with an inverse-square potential."""

from .grid import Field, ModelParams, RadialGrid, build_grid

__version__ = "0.1.0"

__all__ = ["Field", "ModelParams", "RadialGrid", "build_grid", "__version__"]
