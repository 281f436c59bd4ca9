"""Truncated Merkle trees with bitmap-authenticated presence and absence."""

__version__ = "0.1.0"
