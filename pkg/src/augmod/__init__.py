"""Impaired I/Q dataset generation and light, length-invariant CNNs for modulation classification."""

__version__ = "0.1.0"
