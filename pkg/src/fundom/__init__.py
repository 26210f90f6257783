"""Fundamental domains for discrete isometric group actions on metric spaces."""

__version__ = "0.1.0"
