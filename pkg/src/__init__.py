"""Target-side data augmentation toolkit for document-level translation."""

__version__ = "0.3.0"
