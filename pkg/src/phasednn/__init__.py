"""Phase-shift networks for learning wideband 1-D functions."""

__version__ = "0.1.0"
