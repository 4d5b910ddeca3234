"""Simultaneous reconstruction of a sound-soft obstacle and its point sources
from near-field total-field measurements."""

__version__ = "0.1.0"
