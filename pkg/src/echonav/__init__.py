"""Audio-guided visual attention for grid-world audio-visual navigation."""

__version__ = "0.1.0"
