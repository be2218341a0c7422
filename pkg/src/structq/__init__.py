"""Structured Q-learning and baseline optimisers for combinatorial sequence design."""

__version__ = "0.1.0"
