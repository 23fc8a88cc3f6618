"""Grounded-symbol object identification in blocks-world scenes."""

__version__ = "0.1.0"
