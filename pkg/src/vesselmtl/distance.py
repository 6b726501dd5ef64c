"""Euclidean distance maps of binary vessel masks.

Foreground pixels carry the distance to the nearest background pixel and
background pixels are 0. A mask with no background saturates to the image
diagonal.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, OracleTooLargeError
from .kernels import edt_sq_rows

RAW = "raw"
UNIT_MAX = "unit-max"
BRUTEFORCE_CAP = 16384


@dataclass
class DistanceMap:
    values: np.ndarray
    normalization: str = RAW

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def as_mask(mask):
    """Coerce to a 2-D boolean array; rejects empty and non-binary input."""
    m = np.asarray(mask)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    if m.dtype != bool:
        if not np.isin(m, (0, 1)).all():
            raise InvalidInputError("mask values must be exactly 0 or 1")
        m = m.astype(bool)
    return m


def _saturated(shape):
    h, w = shape
    return np.full(shape, np.hypot(h, w))


def edt_exact(mask):
    """Exact EDT by two separable lower-envelope passes over squared distances."""
    m = as_mask(mask)
    if m.all():
        return DistanceMap(_saturated(m.shape))
    f = np.where(m, np.inf, 0.0)
    cols = edt_sq_rows(np.ascontiguousarray(f.T))
    sq = edt_sq_rows(np.ascontiguousarray(cols.T))
    return DistanceMap(np.sqrt(sq))


def edt_bruteforce(mask, cap=BRUTEFORCE_CAP):
    """All-pairs reference EDT; only for small masks."""
    m = as_mask(mask)
    if m.size > cap:
        raise OracleTooLargeError(f"mask has {m.size} pixels, oracle cap is {cap}")
    if m.all():
        return DistanceMap(_saturated(m.shape))
    out = np.zeros(m.shape)
    bg = np.argwhere(~m).astype(np.float64)
    for p in np.argwhere(m):
        out[p[0], p[1]] = np.sqrt(((bg - p) ** 2).sum(axis=1).min())
    return DistanceMap(out)


def normalize_dt(dmap):
    """Scale by the map maximum; all-zero maps pass through."""
    peak = dmap.values.max()
    if peak > 0:
        return DistanceMap(dmap.values / peak, UNIT_MAX)
    return DistanceMap(dmap.values.copy(), UNIT_MAX)
