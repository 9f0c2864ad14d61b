"""Offline EEG decoding toolkit for visual motion imagery."""
__version__ = "0.1.0"
