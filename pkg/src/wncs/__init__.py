"""Scheduling toolkit for multi-loop wireless networked control."""

__version__ = "0.1.0"
