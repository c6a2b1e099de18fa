"""Exact-simulation qGAN and Born machine training on close-price distributions."""

__version__ = "0.1.0"
