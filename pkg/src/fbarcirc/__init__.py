"""Harmonic S-parameter simulation of spatiotemporally modulated FBAR wye circulators."""

__version__ = "0.1.0"
