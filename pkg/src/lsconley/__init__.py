"""Conley index tools for LS-flows on finite-dimensional split models."""

__version__ = "0.1.0"
