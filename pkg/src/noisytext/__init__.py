"""Desk-scale laboratory for k-class text classification under label noise."""

__version__ = "0.1.0"
