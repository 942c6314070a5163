"""Finite median-space toolkit: pocsets, examples, convexity, boundary sets and cocycles."""
__version__ = "0.1.0"
