"""Moment hierarchies for bipartite Bell games."""
__version__ = "0.1.0"
