"""Dyadic social motion forecasting in a shared human-robot latent space."""

__version__ = "0.1.0"
