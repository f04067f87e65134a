"""Acceptability bid/ask pricing of contingent claims on scenario trees,
robust over nested-distance ambiguity balls."""

__version__ = "0.1.0"
