"""Evaluation metrics and allergen substitution for generated cooking recipes."""

__version__ = "0.1.0"
