"""Multi-modal (visual + transcribed speech) video scene classification."""

__version__ = "0.1.0"
