"""Inertial/odometer land-navigation fusion: trajectory and sensor simulation,
strapdown mechanization, odometer measurement models, error-state filtering
with an adaptive model bank, and evaluation measures."""

__version__ = "0.1.0"
