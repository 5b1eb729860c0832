"""Exact graded shift-operator algebra for deformed super W and Virasoro relations."""

__version__ = "0.1.0"
