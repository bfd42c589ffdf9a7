"""Simulation testbed for EMI spoofing of Hall-effect fingertip force sensors."""

__version__ = "0.1.0"
