"""Reconstruction- and latent-energy-based OOD detection for short-range FMCW radar."""

__version__ = "0.1.0"
