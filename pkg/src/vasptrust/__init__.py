"""Deterministic simulator and protocol library for VASP trust infrastructure."""

__version__ = "0.1.0"
