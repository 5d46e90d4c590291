"""Image container, Gaussian kernels, convolution and finite-difference stencils.

Array convention: ``data[i, j]`` with ``i`` the row index (first axis, the
"x" direction of the difference stencils) and ``j`` the column index
("y" direction).  Every operation that reads beyond the grid replicates
the nearest border row/column (homogeneous Neumann condition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import ContractViolation, ParameterError


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Dense grayscale image stored as float64.

    ``max_level`` is the intensity ceiling of the source (255 for 8-bit
    files); values above it are legal while processing, they only get
    clipped on export.
    """

    data: np.ndarray
    max_level: float = 255.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ContractViolation(f"image must be a nonempty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("image intensities must be finite")
        if np.any(arr < 0):
            raise ParameterError("image intensities must be nonnegative")
        if not self.max_level > 0:
            raise ParameterError(f"max_level must be positive, got {self.max_level}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "max_level", float(self.max_level))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "ImageGrid":
        return ImageGrid(data, self.max_level)

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.max_level == other.max_level and np.array_equal(self.data, other.data)


ArrayLike = Union[ImageGrid, np.ndarray]


def asarray(img: ArrayLike) -> np.ndarray:
    """Return the float64 pixel array behind ``img``."""
    if isinstance(img, ImageGrid):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractViolation(f"expected a 2-D array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Kernel2D:
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        size = 2 * self.radius + 1
        if self.radius < 0 or w.shape != (size, size):
            raise ParameterError(f"kernel of radius {self.radius} needs shape {(size, size)}, got {w.shape}")
        if np.any(w < 0):
            raise ParameterError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"kernel weights must sum to 1, got {w.sum()!r}")
        if not np.allclose(w, w[::-1, ::-1], rtol=0, atol=1e-15):
            raise ParameterError("kernel must be centrally symmetric")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls) -> "Kernel2D":
        return cls(0, np.ones((1, 1)))


class VectorField(NamedTuple):
    """Per-pixel derivative pair; ``dx`` along rows' index i, ``dy`` along j."""

    dx: np.ndarray
    dy: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


def reflect_sample(img: ArrayLike, i: int, j: int) -> float:
    """Read pixel ``(i, j)`` with one ghost layer of replicated border.

    Indices may run from -1 to ``n`` inclusive along each axis; anything
    further out is a stencil bug and raises :class:`ContractViolation`.
    """
    arr = asarray(img)
    n, m = arr.shape
    if not (-1 <= i <= n and -1 <= j <= m):
        raise ContractViolation(f"index ({i}, {j}) is more than one pixel outside a {n}x{m} grid")
    return float(arr[min(max(i, 0), n - 1), min(max(j, 0), m - 1)])


def default_radius(xi: float) -> int:
    return max(1, math.ceil(3 * xi))


def gaussian_kernel(xi: float, radius: int | None = None) -> Kernel2D:
    """Truncated, renormalized 2-D Gaussian with standard deviation ``xi``."""
    if not xi > 0:
        raise ParameterError(f"xi must be positive, got {xi}")
    if radius is None:
        radius = default_radius(xi)
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    a, b = np.meshgrid(offsets, offsets, indexing="ij")
    w = np.exp(-(a * a + b * b) / (2.0 * xi * xi))
    w /= w.sum()
    # exact central symmetry despite summation-order rounding
    w = 0.5 * (w + w[::-1, ::-1])
    return Kernel2D(radius, w / w.sum())


def pad_edge(arr: np.ndarray, depth: int = 1) -> np.ndarray:
    return np.pad(arr, depth, mode="edge")


def convolve(img: ArrayLike, kernel: Kernel2D) -> np.ndarray:
    """Direct convolution with border replication; output has the input's shape.

    The kernel is centrally symmetric, so correlation and convolution agree.
    """
    arr = asarray(img)
    r = kernel.radius
    if r == 0:
        return arr * kernel.weights[0, 0]
    padded = pad_edge(arr, r)
    n, m = arr.shape
    out = np.zeros_like(arr)
    for a in range(2 * r + 1):
        for b in range(2 * r + 1):
            out += kernel.weights[a, b] * padded[a:a + n, b:b + m]
    return out


def central_gradient(img: ArrayLike, h: float = 1.0) -> VectorField:
    if not h > 0:
        raise ParameterError(f"grid spacing must be positive, got {h}")
    p = pad_edge(asarray(img))
    dx = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * h)
    dy = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * h)
    return VectorField(dx, dy)
