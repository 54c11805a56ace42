"""Photon-limited imaging toolkit: shot-noise camera simulation, TV-regularized
Poisson reconstruction, and a from-scratch numpy convolutional auto-encoder."""

__version__ = "0.1.0"
