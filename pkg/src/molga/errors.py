"""Shared exception base for the package."""


class MolgaError(Exception):
    """Base class for all molga errors."""
