"""Accelerometer actigraphy and circadian rhythm analytics for collar-logged cats."""

__version__ = "0.1.0"
