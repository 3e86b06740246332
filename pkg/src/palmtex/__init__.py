"""Co-occurrence texture features and template classifiers for multispectral palmprints."""

__version__ = "0.1.0"
