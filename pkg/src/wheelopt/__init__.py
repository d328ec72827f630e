"""Co-optimization of rover wheel geometry and steering gains on granular terrain."""

__version__ = "0.1.0"
