"""Mask-and-infill sentiment transfer on non-parallel text."""

__version__ = "0.1.0"
