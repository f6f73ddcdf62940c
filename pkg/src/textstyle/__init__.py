"""Text-driven artwork retrieval and image style transfer."""

__version__ = "0.1.0"
