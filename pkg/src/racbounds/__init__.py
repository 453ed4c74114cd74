"""Information-gain bounds for d-level random access codes built on no-signaling boxes."""

__version__ = "0.1.0"
