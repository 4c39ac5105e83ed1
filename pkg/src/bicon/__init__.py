"""Spectral biconnectivity tools for multi-robot networks."""

__version__ = "0.1.0"
