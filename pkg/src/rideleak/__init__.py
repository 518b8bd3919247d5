"""Leakage simulation and passive SP attack for block-decomposed road network embeddings."""

__version__ = "0.1.0"
