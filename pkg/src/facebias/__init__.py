"""Debiasing, diversity and bias-audit tools for face-analysis embeddings."""

__version__ = "0.1.0"
