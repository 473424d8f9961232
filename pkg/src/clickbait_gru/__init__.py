"""Clickbait-score regression with a bidirectional GRU trained by hand-rolled BPTT."""

__version__ = "0.1.0"
