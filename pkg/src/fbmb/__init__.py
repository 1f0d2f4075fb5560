"""Bounds and Monte Carlo estimates of boundary non-crossing probabilities
for fractional Brownian motion with a deterministic trend."""

__version__ = "0.1.0"
