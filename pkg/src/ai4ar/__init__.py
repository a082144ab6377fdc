"""Desk-scale AI-for-AR pipeline: frame gateway, simulator, auto-labeling,
and evaluation toolkits."""

__version__ = "0.1.0"
