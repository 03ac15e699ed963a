"""Hot loops, compiled with numba when available.

Set ``SUPERSEG_DISABLE_NUMBA=1`` to force the numpy reference path. Both
modules expose the same functions; ``BACKEND`` names the one in use.
"""
import os

from . import _numpy

_disabled = os.environ.get("SUPERSEG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

_impl = _numpy
BACKEND = "numpy"
if not _disabled:
    try:
        from . import _numba as _impl  # noqa: F811

        BACKEND = "numba"
    except ImportError:  # numba missing from the environment
        pass

neighbor_covariances = _impl.neighbor_covariances
felzenszwalb = _impl.felzenszwalb
project_points = _impl.project_points
mask_histogram = _impl.mask_histogram
accumulate_frame_affinity = _impl.accumulate_frame_affinity
region_grow = _impl.region_grow
raycast_boxes = _impl.raycast_boxes

__all__ = [
    "BACKEND",
    "neighbor_covariances",
    "felzenszwalb",
    "project_points",
    "mask_histogram",
    "accumulate_frame_affinity",
    "region_grow",
    "raycast_boxes",
]
