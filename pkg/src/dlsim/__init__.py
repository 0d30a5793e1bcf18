"""Deterministic simulator comparing device-, host- and memory-centric deep-learning training systems."""

__version__ = "0.1.0"
