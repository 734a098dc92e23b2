"""Surgical vision-language corpus construction and benchmark evaluation."""

__version__ = "0.1.0"
