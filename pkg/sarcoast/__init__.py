"""Coastline extraction from SAR intensity images: preprocessing,
augmentation, floating-window inference, extraction, ensembling and
distance scoring."""

__version__ = "0.1.0"
