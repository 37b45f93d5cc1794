"""Prompt-based data augmentation and sweep evaluation for imbalanced
automatic-scoring datasets."""

__version__ = "0.1.0"
