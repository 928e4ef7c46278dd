"""Multi-texture neural cellular automata driven by genome channels."""

__version__ = "0.1.0"
