"""Offline exporter producing EMBTXT v1 sentence-embedding stores."""

__version__ = "0.1.0"
