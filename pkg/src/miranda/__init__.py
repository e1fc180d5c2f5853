"""Parity-certified zero finding for maps on a cuboid with opposite-sign faces."""

__version__ = "0.1.0"
