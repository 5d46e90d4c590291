"""Image quality measures: PSNR, MSSIM, speckle index, ratio image, line profiles."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import ArrayLike, ImageGrid, asarray, pad_edge
from .errors import ContractViolation, ParameterError


@dataclass
class MetricsReport:
    psnr_db: float
    mssim: float
    speckle_index: float
    iterations: int = 0
    wall_seconds: float = 0.0
    # placeholder so tables keep the no-reference quality column
    brisque: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _max_level(*imgs, default: float = 255.0) -> float:
    levels = {img.max_level for img in imgs if isinstance(img, ImageGrid)}
    if len(levels) > 1:
        raise ParameterError(f"images disagree on max_level: {sorted(levels)}")
    return levels.pop() if levels else default


def _pair(ref: ArrayLike, test: ArrayLike):
    a, b = asarray(ref), asarray(test)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(ref: ArrayLike, test: ArrayLike, max_level: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a, b = _pair(ref, test)
    peak = max_level if max_level is not None else _max_level(ref, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(arr: np.ndarray, w: np.ndarray) -> np.ndarray:
    k = w.shape[0]
    n, m = arr.shape[0] - k + 1, arr.shape[1] - k + 1
    out = np.zeros((n, m))
    for a in range(k):
        for b in range(k):
            out += w[a, b] * arr[a:a + n, b:b + m]
    return out


def ssim_map(ref: ArrayLike, test: ArrayLike, window: int = 11, sigma: float = 1.5,
             max_level: float | None = None) -> np.ndarray:
    """Local SSIM over every fully-contained Gaussian-weighted window."""
    a, b = _pair(ref, test)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd integer, got {window}")
    if window > min(a.shape):
        raise ParameterError(f"window {window} exceeds image size {a.shape}")
    peak = max_level if max_level is not None else _max_level(ref, test)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    w = _gaussian_window(window, sigma)
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def mssim(ref: ArrayLike, test: ArrayLike, window: int = 11, sigma: float = 1.5,
          max_level: float | None = None) -> float:
    a, b = _pair(ref, test)
    if np.array_equal(a, b):
        # skip the window algebra so a perfect match is exactly 1
        ssim_map(ref, test, window, sigma, max_level)
        return 1.0
    return float(np.mean(ssim_map(ref, test, window, sigma, max_level)))


def local_mean_std(arr: np.ndarray, window: int = 3):
    """Unweighted local mean and population std over edge-replicated windows."""
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd integer, got {window}")
    r = window // 2
    p = pad_edge(arr, r) if r else arr
    n, m = arr.shape
    s = np.zeros_like(arr)
    s2 = np.zeros_like(arr)
    for a in range(window):
        for b in range(window):
            blk = p[a:a + n, b:b + m]
            s += blk
            s2 += blk * blk
    count = window * window
    mean = s / count
    var = np.maximum(s2 / count - mean * mean, 0.0)
    return mean, np.sqrt(var)


def speckle_index(img: ArrayLike, window: int = 3, eta: float | None = None) -> float:
    """Mean local coefficient of variation; pixels whose local mean is below
    ``eta`` (default ``1e-6 * max_level``) contribute zero."""
    arr = asarray(img)
    if eta is None:
        eta = 1e-6 * (img.max_level if isinstance(img, ImageGrid) else 1.0)
    mean, std = local_mean_std(arr, window)
    ok = mean >= eta
    cv = np.zeros_like(arr)
    cv[ok] = std[ok] / mean[ok]
    return float(cv.mean())


def ratio_image(noisy: ArrayLike, restored: ArrayLike, eta: float | None = None) -> np.ndarray:
    """Pointwise ``noisy / restored``; should look like pure speckle."""
    a, b = _pair(noisy, restored)
    if eta is None:
        eta = 1e-6 * _max_level(noisy, restored)
    return a / np.maximum(b, eta)


def line_profile(img: ArrayLike, row: int) -> list[tuple[int, float]]:
    arr = asarray(img)
    if not 0 <= row < arr.shape[0]:
        raise ContractViolation(f"row {row} outside [0, {arr.shape[0]})")
    return [(j, float(v)) for j, v in enumerate(arr[row])]


def evaluate(clean: ImageGrid, restored: ImageGrid, iterations: int = 0, wall_seconds: float = 0.0) -> MetricsReport:
    return MetricsReport(
        psnr_db=psnr(clean, restored),
        mssim=mssim(clean, restored),
        speckle_index=speckle_index(restored),
        iterations=iterations,
        wall_seconds=wall_seconds,
    )
