"""Pixel-wise self-supervised embeddings for irregular satellite time series."""

__version__ = "0.1.0"
