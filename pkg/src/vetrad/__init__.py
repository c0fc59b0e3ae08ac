"""Desk-scale veterinary radiograph AI lifecycle toolkit."""

__version__ = "0.1.0"
