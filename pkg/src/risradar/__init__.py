"""Simulation and estimation toolkit for RIS-aided NLoS monostatic OFDM sensing."""

__version__ = "0.1.0"
