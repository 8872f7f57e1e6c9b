"""Holographic-surface beamforming: signal model, optimizers, estimation and training."""

__version__ = "0.1.0"
