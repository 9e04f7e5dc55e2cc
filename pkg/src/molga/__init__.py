"""Genetic molecular design engine with a learned adaptive penalty."""

__version__ = "0.1.0"
