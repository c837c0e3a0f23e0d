"""Certified constructions of packings of congruent infinite cylinders."""

__version__ = "0.1.0"
