"""Exterior differential systems on Lie algebroids."""

__version__ = "0.1.0"
