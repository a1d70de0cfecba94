"""Timing-driven mixed-size analytical placement for island-style FPGAs."""

__version__ = "0.1.0"
