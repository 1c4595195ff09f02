"""Self-tallying 1-out-of-k voting over emulated booth contracts."""

__version__ = "0.1.0"
