"""Temporal-logic planning and navigation-function control for multi-agent object transport."""

__version__ = "0.1.0"
