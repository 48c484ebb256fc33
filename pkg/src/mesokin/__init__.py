"""Particle simulation of kinetic transport with certified phase-space functionals."""

__version__ = "0.1.0"
