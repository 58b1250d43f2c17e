"""Doeblin coupling, bridge graphs and perfect sampling of Taboo and Potential point processes."""

from __future__ import annotations

__version__ = "0.1.0"
