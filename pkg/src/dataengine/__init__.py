"""Closed-loop instruction-tuning data engine."""

__version__ = "0.1.0"
