"""Explicit time steppers: fuzzy telegraph TV (proposed), TDM and Dong baselines.

All three evolve an image stored in its native gray levels, but the PDE
is posed on intensities normalized by ``max_level``.  Unit-free terms
(the TV flux ``grad I / |grad I|`` and the fidelity ``1 - I0/I``) are
therefore multiplied by ``max_level`` when added to the raw iterate; terms
linear in ``I`` (TDM and regularized diffusion) need no factor.  This is
exactly the normalized scheme rescaled, without a lossy round trip.

Spatial derivatives use a conservative flux form: fluxes live on the
faces between neighbouring pixels and border faces carry zero flux, so the
divergence field sums to zero (discrete Neumann condition).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .core import ArrayLike, ImageGrid, asarray, central_gradient, convolve, gaussian_kernel, pad_edge
from .errors import DegenerateInputError, NumericalBlowup, ParameterError
from .fuzzy import EdgeIndicatorField, FuzzyTemplate, default_templates, edge_indicator_from_membership

log = logging.getLogger(__name__)

# Fallback eps_tv / max_level per solver.  The explicit telegraph scheme
# chatters once eps_tv drops below about 2 tau^2; first-order descent
# needs roughly 4 tau.
PROPOSED_EPS_TV_REL = 0.02
DONG_EPS_TV_REL = 0.4

Mode = Literal["direct", "regularized"]
ThetaSchedule = Literal["per_step", "frozen"]
FluxScheme = Literal["conservative", "central"]
FidelityScheme = Literal["explicit", "implicit"]


@dataclass(frozen=True)
class SolverParams:
    """Numerical knobs shared by the three solvers.

    Relative parameters (``*_rel``) are fractions of the image's
    ``max_level``; they are resolved to gray levels by :meth:`resolve`.
    ``eps_tv`` and ``k_edge`` given explicitly are in gray levels and
    ``k_gray`` in 1/gray-level^2.
    """

    tau: float = 0.1
    gamma: float = 1.0
    lambda_fid: float = 1.0
    eps_tv: float | None = None
    eps_stop: float = 1e-4
    max_iter: int = 2000
    min_iter: int = 2
    mode: Mode = "direct"
    xi: float = 1.0
    k_edge: float | None = None
    k_gray: float | None = None
    theta_schedule: ThetaSchedule = "per_step"
    delta: float = 0.05
    flux: FluxScheme = "conservative"
    fidelity: FidelityScheme = "explicit"
    lambda_decay: float = 0.0
    hesitation_lambda: float | None = None
    eps_tv_rel: float | None = None
    k_edge_rel: float = 0.3
    k_gray_rel: float = 4.0
    eta_rel: float = 1e-6

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if not self.gamma >= 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.lambda_fid >= 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lambda_fid}")
        if not self.eps_stop > 0:
            raise ParameterError(f"eps_stop must be positive, got {self.eps_stop}")
        if self.eps_tv is not None and not self.eps_tv > 0:
            raise ParameterError(f"eps_tv must be positive, got {self.eps_tv}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError(f"max_iter must be a positive integer, got {self.max_iter}")
        if int(self.min_iter) != self.min_iter or self.min_iter < 1:
            raise ParameterError(f"min_iter must be a positive integer, got {self.min_iter}")
        if not self.xi > 0:
            raise ParameterError(f"xi must be positive, got {self.xi}")
        for name in ("k_edge", "k_gray"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ParameterError(f"{name} must be positive, got {v}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.mode not in ("direct", "regularized"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.theta_schedule not in ("per_step", "frozen"):
            raise ParameterError(f"unknown theta schedule {self.theta_schedule!r}")
        if self.flux not in ("conservative", "central"):
            raise ParameterError(f"unknown flux scheme {self.flux!r}")
        if self.fidelity not in ("explicit", "implicit"):
            raise ParameterError(f"unknown fidelity scheme {self.fidelity!r}")
        if self.lambda_decay < 0:
            raise ParameterError("lambda_decay must be nonnegative")

    def resolve(self, max_level: float, eps_tv_rel: float = PROPOSED_EPS_TV_REL) -> "SolverParams":
        """Fill unset absolute parameters from their relative defaults.

        ``eps_tv_rel`` is the solver's own fallback when the field is unset.
        """
        if self.eps_tv_rel is not None:
            eps_tv_rel = self.eps_tv_rel
        return replace(
            self,
            eps_tv=self.eps_tv if self.eps_tv is not None else eps_tv_rel * max_level,
            k_edge=self.k_edge if self.k_edge is not None else self.k_edge_rel * max_level,
            k_gray=self.k_gray if self.k_gray is not None else self.k_gray_rel / max_level**2,
        )

    def lambda_at(self, iteration: int) -> float:
        if self.lambda_decay == 0:
            return self.lambda_fid
        return self.lambda_fid * max(0.0, 1.0 - self.lambda_decay * iteration)


@dataclass
class SolverState:
    curr: np.ndarray
    prev: np.ndarray
    iteration: int = 0
    last_rel_change: float = 0.0

    def __post_init__(self):
        if self.curr.shape != self.prev.shape:
            raise ParameterError("curr and prev must share a shape")


@dataclass
class RunLog:
    rel_changes: list[float] = field(default_factory=list)
    metrics: list[float | None] = field(default_factory=list)
    stop_reason: Literal["threshold", "max_iter"] | None = None
    wall_seconds: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.rel_changes)

    def record(self, rel_change: float, metric: float | None = None) -> None:
        self.rel_changes.append(rel_change)
        self.metrics.append(metric)

    def records(self):
        """``(iteration, relative change)`` pairs, 1-based."""
        return [(k + 1, r) for k, r in enumerate(self.rel_changes)]

    def to_csv(self) -> str:
        lines = ["iteration,rel_change"]
        lines += [f"{k},{r:.17g}" for k, r in self.records()]
        return "\n".join(lines) + "\n"


# -- spatial operators -------------------------------------------------------


def _faces(u: np.ndarray):
    """Face differences plus the transverse central derivative averaged onto each face."""
    grad = central_gradient(u)
    gx = u[1:, :] - u[:-1, :]
    gy_on_x = 0.5 * (grad.dy[1:, :] + grad.dy[:-1, :])
    gy = u[:, 1:] - u[:, :-1]
    gx_on_y = 0.5 * (grad.dx[:, 1:] + grad.dx[:, :-1])
    return gx, gy_on_x, gy, gx_on_y


def _face_mean_x(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c[1:, :] + c[:-1, :])


def _face_mean_y(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c[:, 1:] + c[:, :-1])


def _flux_divergence(fx: np.ndarray, fy: np.ndarray, shape) -> np.ndarray:
    div = np.zeros(shape)
    div[:-1, :] += fx
    div[1:, :] -= fx
    div[:, :-1] += fy
    div[:, 1:] -= fy
    return div


def _theta_array(theta, shape) -> np.ndarray:
    t = theta.theta if isinstance(theta, EdgeIndicatorField) else np.asarray(theta, dtype=np.float64)
    t = np.broadcast_to(t, shape)
    return t


def tv_divergence(img: ArrayLike, theta, eps_tv: float, scheme: FluxScheme = "conservative") -> np.ndarray:
    """``div(theta * grad I / |grad I|_eps)`` with ``|g|_eps = sqrt(|g|^2 + eps^2)``.

    ``scheme="central"`` nests two central differences exactly as the
    textbook explicit scheme writes them; it is not conservative.
    """
    if not eps_tv > 0:
        raise ParameterError(f"eps_tv must be positive, got {eps_tv}")
    u = asarray(img)
    t = _theta_array(theta, u.shape)
    if scheme == "central":
        g = central_gradient(u)
        norm = np.sqrt(g.dx**2 + g.dy**2 + eps_tv**2)
        return central_gradient(t * g.dx / norm).dx + central_gradient(t * g.dy / norm).dy
    gx, gy_on_x, gy, gx_on_y = _faces(u)
    fx = _face_mean_x(t) * gx / np.sqrt(gx**2 + gy_on_x**2 + eps_tv**2)
    fy = _face_mean_y(t) * gy / np.sqrt(gy**2 + gx_on_y**2 + eps_tv**2)
    return _flux_divergence(fx, fy, u.shape)


def diffusion_divergence(img: ArrayLike, coef) -> np.ndarray:
    """``div(c * grad I)`` with a cell-centred coefficient averaged onto faces."""
    u = asarray(img)
    c = np.broadcast_to(np.asarray(coef, dtype=np.float64), u.shape)
    gx = u[1:, :] - u[:-1, :]
    gy = u[:, 1:] - u[:, :-1]
    return _flux_divergence(_face_mean_x(c) * gx, _face_mean_y(c) * gy, u.shape)


def edge_stopping(s2: np.ndarray, k: float) -> np.ndarray:
    """Perona-Malik diffusivity ``1 / (1 + s^2/k^2)`` from the squared gradient."""
    return 1.0 / (1.0 + s2 / (k * k))


def pm_divergence(img: ArrayLike, k: float) -> np.ndarray:
    """``div(c1(|grad I|) grad I)`` with the diffusivity evaluated on faces."""
    u = asarray(img)
    gx, gy_on_x, gy, gx_on_y = _faces(u)
    fx = edge_stopping(gx**2 + gy_on_x**2, k) * gx
    fy = edge_stopping(gy**2 + gx_on_y**2, k) * gy
    return _flux_divergence(fx, fy, u.shape)


def regularized_coefficient(u: np.ndarray, max_level: float, p: SolverParams, templates) -> np.ndarray:
    """``theta(G*I) / (1 + |grad G*I|)`` on normalized intensities; lies in ``[kappa, 1]``."""
    smooth = convolve(u, gaussian_kernel(p.xi)) / max_level
    theta = edge_indicator_from_membership(smooth, templates, p.delta, p.hesitation_lambda).theta
    return theta / (1.0 + central_gradient(smooth).magnitude())


def gray_level_indicator(I0: ArrayLike, k: float, xi: float) -> np.ndarray:
    """Dong's gray-level indicator; equals 1 wherever ``G*I0`` attains its max."""
    if not (k > 0 and xi > 0):
        raise ParameterError(f"k and xi must be positive, got k={k}, xi={xi}")
    s = convolve(asarray(I0), gaussian_kernel(xi))
    big_m = float(s.max())
    if big_m <= 0:
        raise DegenerateInputError("gray-level indicator is undefined for an all-zero image")
    km2 = k * big_m * big_m
    return (1.0 - 1.0 / (1.0 + k * s * s)) * ((1.0 + km2) / km2)


# -- time stepping -----------------------------------------------------------


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    num = float(np.sum((new - old) ** 2))
    den = float(np.sum(old * old))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _check_finite(new: np.ndarray, iteration: int) -> None:
    if not np.all(np.isfinite(new)):
        bad = np.argwhere(~np.isfinite(new))[0]
        pixel = (int(bad[0]), int(bad[1]))
        raise NumericalBlowup(iteration, pixel, float(new[pixel]))


def _fidelity(curr: np.ndarray, I0: np.ndarray, lam: float) -> np.ndarray | float:
    if lam == 0:
        return 0.0
    return lam * (1.0 - I0 / curr)


def implicit_fidelity(pred: np.ndarray, I0: np.ndarray, beta: float) -> np.ndarray:
    """Solve ``I = pred - beta (1 - I0/I)`` pixelwise for its positive root.

    ``beta`` is the step's fidelity weight (``tau^2 lambda / (1 + gamma tau)``
    for the telegraph scheme).  The root is positive whenever ``I0 > 0`` and
    equals ``I0`` exactly where ``pred == I0``.
    """
    b = pred - beta
    root = 0.5 * (b + np.sqrt(b * b + 4.0 * beta * I0))
    return np.where(pred == I0, I0, root)


def telegraph_update(state: SolverState, force, p: SolverParams, eta: float = 0.0) -> SolverState:
    """Advance ``I_tt + gamma I_t = force`` one explicit step.

    Written as ``I^n + [(I^n - I^{n-1}) + tau^2 force] / (1 + gamma tau)``,
    which equals the centred scheme algebraically and keeps fixed points exact.
    """
    curr = state.curr
    # overflow surfaces as NumericalBlowup in _accept, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        new = curr + ((curr - state.prev) + p.tau * p.tau * force) / (1.0 + p.gamma * p.tau)
    return _accept(state, new, eta)


def _accept(state: SolverState, new: np.ndarray, eta: float) -> SolverState:
    _check_finite(new, state.iteration + 1)
    if eta > 0:
        new = np.maximum(new, eta)
    return SolverState(new, state.curr, state.iteration + 1, relative_change(new, state.curr))


def telegraph_step(
    state: SolverState,
    theta,
    I0: ArrayLike,
    p: SolverParams,
    max_level: float = 255.0,
) -> SolverState:
    """One step of the fuzzy telegraph TV scheme.

    ``theta`` is the edge indicator (or, in regularized mode, the full
    diffusion coefficient ``theta(G*I)/(1+|grad G*I|)``).  ``p`` must be
    resolved (see :meth:`SolverParams.resolve`).
    """
    I0 = asarray(I0)
    lam = p.lambda_at(state.iteration)
    if p.mode == "regularized":
        force = diffusion_divergence(state.curr, theta)
    else:
        force = max_level * tv_divergence(state.curr, theta, p.eps_tv, p.flux)
    eta = p.eta_rel * max_level if lam > 0 else 0.0
    if lam > 0 and p.fidelity == "implicit":
        damp = 1.0 + p.gamma * p.tau
        pred = state.curr + ((state.curr - state.prev) + p.tau * p.tau * force) / damp
        beta = p.tau * p.tau * lam * max_level / damp
        return _accept(state, implicit_fidelity(pred, I0, beta), eta)
    if lam > 0:
        force = force - max_level * _fidelity(state.curr, I0, lam)
    return telegraph_update(state, force, p, eta)


def _initial_state(I0: ImageGrid, p: SolverParams, positive: bool) -> SolverState:
    u0 = I0.data
    if positive:
        u0 = np.maximum(u0, p.eta_rel * I0.max_level)
    # I^1 = I^0: zero initial velocity
    return SolverState(u0.copy(), u0.copy())


def _iterate(
    I0: ImageGrid,
    p: SolverParams,
    step: Callable[[SolverState], SolverState],
    positive: bool,
    monitor: Callable[[np.ndarray], float] | None = None,
):
    start = time.perf_counter()
    state = _initial_state(I0, p, positive)
    run = RunLog()
    while True:
        state = step(state)
        run.record(state.last_rel_change, monitor(state.curr) if monitor else None)
        # A zero change is an exact fixed point; otherwise the first step
        # from rest only measures the O(tau^2) start-up and is not tested.
        rel = state.last_rel_change
        if rel == 0.0 or (state.iteration >= p.min_iter and rel <= p.eps_stop):
            run.stop_reason = "threshold"
            break
        if state.iteration >= p.max_iter:
            run.stop_reason = "max_iter"
            break
    run.wall_seconds = time.perf_counter() - start
    log.debug("stopped after %d iterations (%s)", run.iterations, run.stop_reason)
    # unstable parameter choices may leave finite negative values; clamp them as the noise model does
    return I0.with_data(np.maximum(state.curr, 0.0)), run


def run_proposed(
    I0: ImageGrid,
    p: SolverParams | None = None,
    templates: Sequence[FuzzyTemplate] | None = None,
    monitor: Callable[[np.ndarray], float] | None = None,
):
    """Despeckle ``I0`` with the fuzzy-edge telegraph TV model.

    Returns the restored image and its :class:`RunLog`.  ``monitor``, if
    given, is evaluated on every iterate and stored in the log.
    """
    p = (p or SolverParams()).resolve(I0.max_level, PROPOSED_EPS_TV_REL)
    if templates is None:
        templates = default_templates()
    M = I0.max_level
    data0 = I0.data

    def theta_of(u):
        if p.mode == "regularized":
            return regularized_coefficient(u, M, p, templates)
        return edge_indicator_from_membership(u / M, templates, p.delta, p.hesitation_lambda)

    frozen = theta_of(data0) if p.theta_schedule == "frozen" else None

    def step(state):
        theta = frozen if frozen is not None else theta_of(state.curr)
        return telegraph_step(state, theta, data0, p, M)

    return _iterate(I0, p, step, p.lambda_fid > 0, monitor)


def run_tdm(I0: ImageGrid, p: SolverParams | None = None, monitor=None):
    """Telegraph-diffusion baseline: ``I_tt + gamma I_t = div(c1(|grad I|) grad I)``.

    The fidelity weight is ignored.
    """
    p = (p or SolverParams()).resolve(I0.max_level)

    def step(state):
        return telegraph_update(state, pm_divergence(state.curr, p.k_edge), p)

    return _iterate(I0, p, step, False, monitor)


def run_dong(I0: ImageGrid, p: SolverParams | None = None, monitor=None):
    """Dong's convex TV model by explicit gradient descent.

    ``I^{n+1} = I^n + tau [div(alpha grad I / |grad I|_eps) - lambda (1 - I0/I)]``
    with ``alpha`` frozen from ``I0``.
    """
    p = (p or SolverParams()).resolve(I0.max_level, DONG_EPS_TV_REL)
    M = I0.max_level
    data0 = I0.data
    alpha = gray_level_indicator(data0, p.k_gray, p.xi)
    positive = p.lambda_fid > 0
    eta = p.eta_rel * M if positive else 0.0

    def step(state):
        lam = p.lambda_at(state.iteration)
        pred = state.curr + p.tau * M * tv_divergence(state.curr, alpha, p.eps_tv, p.flux)
        if lam > 0 and p.fidelity == "implicit":
            new = implicit_fidelity(pred, data0, p.tau * lam * M)
        elif lam > 0:
            new = pred - p.tau * M * _fidelity(state.curr, data0, lam)
        else:
            new = pred
        return _accept(state, new, eta)

    return _iterate(I0, p, step, positive, monitor)


SOLVERS = {"proposed": run_proposed, "tdm": run_tdm, "dong": run_dong}
_EPS_TV_REL = {"proposed": PROPOSED_EPS_TV_REL, "tdm": PROPOSED_EPS_TV_REL, "dong": DONG_EPS_TV_REL}


def effective_params(name: str, p: SolverParams | None, max_level: float) -> SolverParams:
    """Parameters exactly as solver ``name`` will use them on an image with ``max_level``."""
    return (p or SolverParams()).resolve(max_level, _EPS_TV_REL[name])


def run_filter(name: str, I0: ImageGrid, p: SolverParams | None = None, templates=None, monitor=None):
    if name == "proposed":
        return run_proposed(I0, p, templates, monitor)
    try:
        return SOLVERS[name](I0, p, monitor)
    except KeyError:
        raise ParameterError(f"unknown filter {name!r}; choose from {sorted(SOLVERS)}") from None
