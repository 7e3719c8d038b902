"""Flexclear - flexibility market clearing and DLMP analysis for radial distribution networks."""

__version__ = "0.1.0"
__all__ = ["__version__"]
