"""histopipe: breast histology classification pipeline for BRACS-style ROI datasets."""

from .labels import CLASS_ORDER, NUM_CLASSES, ClassLabel

__version__ = "0.1.0"

__all__ = ["CLASS_ORDER", "NUM_CLASSES", "ClassLabel", "__version__"]
