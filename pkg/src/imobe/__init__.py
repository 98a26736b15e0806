"""Distributed agent platform for outcome-based education attainment monitoring."""

__version__ = "0.1.0"
