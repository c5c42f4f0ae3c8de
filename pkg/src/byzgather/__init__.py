"""Deterministic simulator and protocol library for Byzantine-tolerant
gathering of mobile agents on anonymous port-numbered graphs."""

__version__ = "0.1.0"
