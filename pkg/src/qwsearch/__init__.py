"""Spatial search by continuous-time quantum walks on complex networks."""

__version__ = "0.1.0"
