"""Script-aware Kashmiri text-to-speech pipeline at desk scale."""

__version__ = "0.1.0"
