"""Lightweight speaker identification and verification from timbral properties
of 0.3 s speech frames, built on a from-scratch random forest."""

__version__ = "0.1.0"
