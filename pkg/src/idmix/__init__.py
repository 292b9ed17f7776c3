"""Infinitely divisible random fields: mixed moving averages and mixing diagnostics."""

__version__ = "0.1.0"
