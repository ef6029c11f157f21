"""Interval neural networks for uncertainty-aware system identification."""

__version__ = "0.1.0"
