"""Softmax policy gradient methods for bandits and tabular MDPs."""

__version__ = "0.1.0"
