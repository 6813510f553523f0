"""Seedable fleet-dispatch simulator with zone-expansion vehicle search."""

__version__ = "0.1.0"
