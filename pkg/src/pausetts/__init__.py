"""Pause-aware non-autoregressive text-to-mel synthesis with phrasing-structure modelling."""

__version__ = "0.1.0"
