"""Observation-based program slicing validated in several execution environments."""

__version__ = "0.1.0"
