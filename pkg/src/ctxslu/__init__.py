"""Contextual end-to-end spoken language understanding on a numpy autodiff core."""

__version__ = "0.1.0"
