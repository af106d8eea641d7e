"""Prior-modulated audio-visual referring segmentation on a synthetic benchmark."""

__version__ = "0.1.0"
