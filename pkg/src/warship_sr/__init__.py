"""Recursive-residual single-image super-resolution in plain numpy."""

__version__ = "0.1.0"
