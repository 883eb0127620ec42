"""Exact workbench for primitive rational points on expanding horospheres."""

__version__ = "0.1.0"
