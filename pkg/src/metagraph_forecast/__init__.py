"""Temporal meta-graph features and next-unit target forecasting."""

__version__ = "0.1.0"
