"""Green semantic segmentation of indoor point clouds."""

from .core_io import CLASS_NAMES, NUM_CLASSES, PointCloud, UnitSet

__all__ = ["CLASS_NAMES", "NUM_CLASSES", "PointCloud", "UnitSet"]
__version__ = "0.1.0"
