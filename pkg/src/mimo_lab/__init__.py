"""Finite-alphabet downlink massive-MIMO precoding laboratory."""

__version__ = "0.1.0"
