"""Two-zone prostate segmentation with an autoencoder shape prior."""

__version__ = "0.1.0"
