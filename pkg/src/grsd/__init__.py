"""Desk-scale laboratory for resolution-shell spectral transport diagnostics."""

__version__ = "0.1.0"
