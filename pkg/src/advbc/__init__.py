"""Offline imitation learning: behavioral cloning and its adversarial variant."""

__version__ = "0.1.0"
