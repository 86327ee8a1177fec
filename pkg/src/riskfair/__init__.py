"""Fairness-aware dropout risk prediction toolkit."""
