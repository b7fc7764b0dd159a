"""Simulator for oblivious inference with canary-slot result checking."""

__version__ = "0.1.0"
