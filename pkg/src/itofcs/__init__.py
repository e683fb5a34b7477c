"""Compressed-sensing multipath suppression for indirect time-of-flight cameras."""

__version__ = "0.1.0"
