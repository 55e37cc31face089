"""blockmend: debug and repair toolkit for Scratch-format block programs."""

__version__ = "0.1.0"
