"""Relational graph networks for multihop question answering."""
__version__ = "0.1.0"
