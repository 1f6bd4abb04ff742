"""Hybrid circuit + neural-network identification of IPMC actuators."""

__version__ = "0.1.0"
