"""Hierarchical autotelic agent with skill compilation on a small crafting gridworld."""

__version__ = "0.1.0"
