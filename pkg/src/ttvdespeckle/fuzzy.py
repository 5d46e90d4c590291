"""Intuitionistic fuzzy divergence (IFD) edge indicator.

Each pixel's 3x3 membership window is compared against a bank of edge
templates.  For every template the elementwise divergences are reduced by
``min``; the pixel's edge strength is the ``max`` of those minima.  The
edge indicator is ``theta = 1 - F / D_MAX`` clamped to ``[delta, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ArrayLike, ImageGrid, asarray, pad_edge
from .errors import ConfigurationError, ContractViolation, DomainError, ParameterError

#: supremum of the divergence on [0, 1]^2, reached at |mu_p - mu_q| = 1
D_MAX = 2.0 - 2.0 / math.e


@dataclass(frozen=True, eq=False)
class FuzzyTemplate:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (3, 3):
            raise ConfigurationError(f"template {self.label!r} must be 3x3, got {v.shape}")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ConfigurationError(f"template {self.label!r} has entries outside [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class EdgeIndicatorField:
    theta: np.ndarray
    delta_floor: float

    def __post_init__(self):
        t = self.theta
        if np.any(t < self.delta_floor) or np.any(t > 1.0):
            raise ParameterError("edge indicator left [delta, 1]")

    @property
    def shape(self):
        return self.theta.shape


def _step_templates() -> list[FuzzyTemplate]:
    idx = np.arange(3)
    rows, cols = np.meshgrid(idx, idx, indexing="ij")
    # (name, mask of the "1" side) for each orientation and edge offset
    masks = [
        ("vertical-a", cols >= 1),
        ("vertical-b", cols >= 2),
        ("horizontal-a", rows >= 1),
        ("horizontal-b", rows >= 2),
        ("diagonal-a", cols > rows),
        ("diagonal-b", cols >= rows),
        ("antidiagonal-a", rows + cols > 2),
        ("antidiagonal-b", rows + cols >= 2),
    ]
    out = []
    for name, mask in masks:
        out.append(FuzzyTemplate(mask.astype(float), f"{name}+"))
        out.append(FuzzyTemplate((~mask).astype(float), f"{name}-"))
    return out


def default_templates() -> list[FuzzyTemplate]:
    """16 binary step templates: 4 orientations x 2 offsets x 2 polarities."""
    return _step_templates()


def to_membership(img: ImageGrid) -> np.ndarray:
    return np.clip(img.data / img.max_level, 0.0, 1.0)


def sugeno_hesitation(mu: np.ndarray, lam: float) -> np.ndarray:
    """Shift memberships by their Sugeno hesitation degree: ``mu + pi = 1 - nu``.

    ``nu = (1 - mu) / (1 + lam * mu)``; ``lam = 0`` gives ``nu = 1 - mu`` and
    leaves ``mu`` unchanged.
    """
    if lam <= -1:
        raise ParameterError(f"Sugeno lambda must exceed -1, got {lam}")
    nu = (1.0 - mu) / (1.0 + lam * mu)
    return np.clip(1.0 - nu, 0.0, 1.0)


def _divergence_of_gap(d):
    # 2 - (1-d)e^d - (1+d)e^-d  ==  2 d sinh d - 4 sinh^2(d/2); the second
    # form only loses a factor 2 to cancellation near d = 0.
    d = np.abs(d)
    s = np.sinh(0.5 * d)
    return 2.0 * d * np.sinh(d) - 4.0 * s * s


def fuzzy_divergence(mu_p: float, mu_q: float) -> float:
    """Exponential divergence between two membership values in [0, 1]."""
    if not (0.0 <= mu_p <= 1.0 and 0.0 <= mu_q <= 1.0):
        raise DomainError(f"memberships must lie in [0, 1], got ({mu_p}, {mu_q})")
    return float(max(_divergence_of_gap(mu_p - mu_q), 0.0))


def _template_stack(templates: Sequence[FuzzyTemplate]) -> np.ndarray:
    templates = list(templates)
    if not templates:
        raise ConfigurationError("template set is empty")
    return np.stack([t.values for t in templates])


def ifd_measure(window, templates: Sequence[FuzzyTemplate]) -> float:
    """Max over templates of the min over the 9 elementwise divergences."""
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (3, 3):
        raise ContractViolation(f"window must be 3x3, got {w.shape}")
    if np.any(w < 0) or np.any(w > 1):
        raise DomainError("window memberships must lie in [0, 1]")
    stack = _template_stack(templates)
    div = np.maximum(_divergence_of_gap(w[None] - stack), 0.0)
    return float(div.reshape(len(stack), 9).min(axis=1).max())


def ifd_field(mu: np.ndarray, templates: Sequence[FuzzyTemplate]) -> np.ndarray:
    """:func:`ifd_measure` at every pixel over edge-replicated 3x3 windows."""
    stack = _template_stack(templates)
    n, m = mu.shape
    p = pad_edge(mu)
    windows = [p[a:a + n, b:b + m] for a in range(3) for b in range(3)]
    best = np.zeros_like(mu)
    for t in stack:
        worst = None
        for k, win in enumerate(windows):
            d = _divergence_of_gap(win - t.flat[k])
            worst = d if worst is None else np.minimum(worst, d)
        np.maximum(best, worst, out=best)
    return np.maximum(best, 0.0)


def edge_indicator_from_membership(
    mu: np.ndarray,
    templates: Sequence[FuzzyTemplate] | None = None,
    delta: float = 0.05,
    hesitation_lambda: float | None = None,
) -> EdgeIndicatorField:
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if templates is None:
        templates = default_templates()
    mu = np.clip(mu, 0.0, 1.0)
    if hesitation_lambda is not None:
        mu = sugeno_hesitation(mu, hesitation_lambda)
    f_norm = np.minimum(ifd_field(mu, templates) / D_MAX, 1.0)
    return EdgeIndicatorField(np.clip(1.0 - f_norm, delta, 1.0), delta)


def edge_indicator(
    img: ArrayLike,
    templates: Sequence[FuzzyTemplate] | None = None,
    delta: float = 0.05,
    max_level: float | None = None,
    hesitation_lambda: float | None = None,
) -> EdgeIndicatorField:
    """Per-pixel fuzzy edge indicator in ``[delta, 1]``; low on edges.

    ``max_level`` defaults to the image's own ceiling for an
    :class:`ImageGrid` and to 1 for a bare array.
    """
    if max_level is None:
        max_level = img.max_level if isinstance(img, ImageGrid) else 1.0
    mu = asarray(img) / max_level
    return edge_indicator_from_membership(mu, templates, delta, hesitation_lambda)


# -- template files ---------------------------------------------------------
#
# One block per template: a label line followed by three rows of three
# whitespace-separated reals; blocks are separated by blank lines.


def parse_templates(text: str) -> list[FuzzyTemplate]:
    templates = []
    lines = text.splitlines()
    block: list[tuple[int, str]] = []

    def flush():
        if not block:
            return
        lineno, label = block[0]
        if len(block) != 4:
            raise ConfigurationError(
                f"line {lineno}: template {label.strip()!r} needs a label and 3 rows, got {len(block) - 1} rows"
            )
        rows = []
        for ln, row in block[1:]:
            try:
                vals = [float(tok) for tok in row.split()]
            except ValueError:
                raise ConfigurationError(f"line {ln}: non-numeric template entry: {row!r}") from None
            if len(vals) != 3:
                raise ConfigurationError(f"line {ln}: expected 3 values, got {len(vals)}")
            rows.append(vals)
        try:
            templates.append(FuzzyTemplate(np.array(rows), label.strip()))
        except ConfigurationError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from None
        block.clear()

    for lineno, line in enumerate(lines, start=1):
        if line.strip():
            block.append((lineno, line))
        else:
            flush()
    flush()
    if not templates:
        raise ConfigurationError("template file contains no templates")
    return templates


def format_templates(templates: Iterable[FuzzyTemplate]) -> str:
    blocks = []
    for t in templates:
        rows = [" ".join(repr(float(v)) for v in row) for row in t.values]
        blocks.append("\n".join([t.label or "template", *rows]))
    return "\n\n".join(blocks) + "\n"


def load_templates(path: str | Path) -> list[FuzzyTemplate]:
    return parse_templates(Path(path).read_text())


def save_templates(templates: Iterable[FuzzyTemplate], path: str | Path) -> None:
    Path(path).write_text(format_templates(templates))
