"""Numerical laboratory for half-form corrected quantization."""

__version__ = "0.1.0"
