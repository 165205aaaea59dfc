"""Acoustic tap-testing toolkit: energy gating, tap segmentation, PCA,
k-means / decision-tree classification and a vibrating-platform synthesizer."""

__version__ = "0.1.0"
