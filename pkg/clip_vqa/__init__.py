"""Desk-scale CLIP-style no-reference video quality assessment."""

__version__ = "0.1.0"

__all__ = ["__version__"]
