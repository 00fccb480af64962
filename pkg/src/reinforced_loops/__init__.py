"""Reinforced loop soups, Wilson's algorithms and supersymmetric isomorphism checks."""

__version__ = "0.1.0"
