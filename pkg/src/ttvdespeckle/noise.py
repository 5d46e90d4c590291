"""Multiplicative L-look gamma speckle with seed-only reproducibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageGrid
from .errors import ParameterError

STANDARD_LOOKS = (1, 3, 5, 10, 33)


@dataclass(frozen=True)
class NoiseSpec:
    looks: int
    seed: int = 0

    def __post_init__(self):
        if int(self.looks) != self.looks or self.looks < 1:
            raise ParameterError(f"looks must be a positive integer, got {self.looks}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def make_rng(seed: int) -> np.random.Generator:
    # PCG64 is seeded from the integer alone; no OS entropy is consulted.
    return np.random.Generator(np.random.PCG64(seed))


def gamma_draw(shape: float, scale: float, rng: np.random.Generator) -> float:
    if not (shape > 0 and scale > 0):
        raise ParameterError(f"gamma parameters must be positive, got shape={shape}, scale={scale}")
    return float(rng.gamma(shape, scale))


def speckle_field(shape: tuple[int, int], spec: NoiseSpec) -> np.ndarray:
    """Unit-mean multipliers ~ Gamma(L, 1/L), variance 1/L."""
    rng = make_rng(spec.seed)
    return rng.gamma(float(spec.looks), 1.0 / spec.looks, size=shape)


def apply_speckle(img: ImageGrid, spec: NoiseSpec) -> ImageGrid:
    noisy = img.data * speckle_field(img.shape, spec)
    return img.with_data(np.maximum(noisy, 0.0))
