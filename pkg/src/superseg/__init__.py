"""Class-agnostic 3D instance segmentation from superpoints, multi-view 2D masks and 3D boxes."""
__version__ = "0.1.0"
