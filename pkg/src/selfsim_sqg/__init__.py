"""Spectral workbench for self-similar instability and nonuniqueness in (alpha, beta)-SQG."""
__version__ = "0.1.0"
