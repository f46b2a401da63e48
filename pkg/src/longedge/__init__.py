"""Longest nearest-neighbor and spanning-tree edges of planar random samples."""
from __future__ import annotations

__version__ = "0.1.0"
