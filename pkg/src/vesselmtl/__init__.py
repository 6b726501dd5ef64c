"""Shared-encoder segmentation + distance-map U-Net with adaptive loss weighting."""
from ._accel import USE_NUMBA

__version__ = "0.1.0"
