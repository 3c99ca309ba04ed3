"""Passive-cooling thermal simulator for shielded cryogenic instruments."""

__version__ = "0.1.0"
