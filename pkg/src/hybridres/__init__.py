"""Hybrid renewable plant simulation and economic dispatch."""

__version__ = "0.1.0"
