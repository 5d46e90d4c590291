"""Synthetic test images standing in for non-redistributable photographs."""

from __future__ import annotations

import numpy as np

from .core import ImageGrid
from .errors import ParameterError

KINDS = ("circle", "checkerboard", "ramp")


def circle_mask(size: int, radius: float | None = None) -> np.ndarray:
    """Pixels whose centres lie within ``radius`` (default ``size/4``) of the image centre."""
    if radius is None:
        radius = size / 4.0
    c = (size - 1) / 2.0
    i, j = np.mgrid[0:size, 0:size]
    return (i - c) ** 2 + (j - c) ** 2 <= radius * radius


def phantom(kind: str, size: int = 128, lo: float = 50.0, hi: float = 200.0,
            tile: int = 16, max_level: float = 255.0) -> ImageGrid:
    """Deterministic phantom: ``circle`` (bright disk on ``lo`` background),
    ``checkerboard`` (``tile``-pixel squares alternating lo/hi, ``lo`` at the
    origin) or ``ramp`` (each column a constant, rising linearly lo -> hi)."""
    if int(size) != size or size < 16:
        raise ParameterError(f"phantom size must be an integer >= 16, got {size}")
    if kind == "circle":
        data = np.where(circle_mask(size), hi, lo)
    elif kind == "checkerboard":
        if tile < 1:
            raise ParameterError(f"tile must be positive, got {tile}")
        i, j = np.mgrid[0:size, 0:size]
        data = np.where(((i // tile) + (j // tile)) % 2 == 0, lo, hi)
    elif kind == "ramp":
        row = lo + (hi - lo) * np.arange(size) / (size - 1)
        data = np.tile(row, (size, 1))
    else:
        raise ParameterError(f"unknown phantom {kind!r}; choose from {KINDS}")
    return ImageGrid(data.astype(np.float64), max_level)
