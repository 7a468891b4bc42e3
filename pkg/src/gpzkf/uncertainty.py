"""High-probability bound boxes consumed by the filter.

Noise boxes come from a union bound over Gaussian tails; model-error boxes
combine confidence intervals with Lagrange-remainder style linearisation
bounds. All error boxes are zero-centred.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gpcore import GPModel, LipschitzConstants
from .zonogeom import Box, Zonotope, zonotope_interval_hull, zonotope_norm


@dataclass(frozen=True)
class NoiseSpec:
    std: float
    dim: int
    horizon: int
    delta: float

    def __post_init__(self):
        if self.std <= 0 or self.dim <= 0 or self.horizon <= 0:
            raise ValueError("noise std, dim and horizon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class BudgetSplit:
    delta_g: float
    delta_h: float
    delta_w: float
    delta_v: float

    def success_probability(self) -> float:
        return (1 - self.delta_g - self.delta_w) * (1 - self.delta_h - self.delta_v)

    def satisfies(self, total_delta: float) -> bool:
        return self.success_probability() >= 1.0 - total_delta - 1e-12


def noise_box(spec: NoiseSpec) -> Box:
    """Box holding all ``horizon`` noise vectors jointly w.p. ``1 - delta``."""
    r = math.sqrt(2.0) * spec.std * math.sqrt(math.log(spec.horizon * spec.dim / spec.delta))
    return Box.zero_centered(np.full(spec.dim, r))


def split_budget(total_delta: float, override: BudgetSplit | None = None) -> BudgetSplit:
    if not 0.0 < total_delta < 1.0:
        raise ValueError(f"total_delta must lie in (0, 1), got {total_delta}")
    split = override or BudgetSplit(*(total_delta / 4,) * 4)
    for name, d in vars(split).items():
        if not 0.0 < d < 1.0:
            raise ValueError(f"{name}={d} outside (0, 1)")
    if not split.satisfies(total_delta):
        raise ValueError(
            f"budget {split} gives success probability {split.success_probability():.4f} < {1 - total_delta:.4f}"
        )
    return split


@dataclass(frozen=True)
class GrowthParams:
    """Per-step drift bounds used to inflate the initial set."""

    known_drift: float  # B^f
    rkhs_bound: float  # B^g
    kernel_sup: float  # ||k^g||_inf
    beta: float  # beta^g
    noise_radius: float  # r_W


def compact_state_box(X0: Zonotope, horizon: int, growth: GrowthParams) -> Box:
    """Crude linear-in-T enclosure of every reachable state.

    Inflates the hull of ``X0`` by ``T (B^f + sqrt(n) sqrt(||k||) beta + r_W)``.
    ``growth.rkhs_bound`` is kept for reporting; the GP term enters through ``beta``.
    """
    hull = zonotope_interval_hull(X0)
    n = X0.dim
    step = growth.known_drift + math.sqrt(n) * math.sqrt(growth.kernel_sup) * growth.beta + growth.noise_radius
    return Box(hull.center, hull.radius + horizon * step)


def known_drift_bound(f: Callable, X0: Zonotope, u) -> float:
    """``max ||f(x, u) - x||`` over the vertices of the hull of ``X0``.

    Exact when ``f`` is affine; otherwise a sampled estimate.
    """
    hull = zonotope_interval_hull(X0)
    corners = Zonotope(hull.center, np.diag(hull.radius)).vertices()
    return max(float(np.linalg.norm(np.asarray(f(x, u)) - x)) for x in corners)


def sampled_hessian_bound(f: Callable, domain: Box, n_samples: int = 200, h: float = 1e-4, safety: float = 1.5, seed: int = 0) -> np.ndarray:
    """Per-component Hessian spectral-norm bounds of ``x -> f(x)`` over ``domain``."""
    rng = np.random.default_rng(seed)
    n = domain.dim
    pts = domain.center + domain.radius * rng.uniform(-1, 1, size=(n_samples, n))
    m = np.asarray(f(domain.center)).size
    best = np.zeros(m)
    eye = np.eye(n) * h
    for x in pts:
        H = np.empty((m, n, n))
        for a in range(n):
            for b in range(n):
                H[:, a, b] = (
                    np.asarray(f(x + eye[a] + eye[b]))
                    - np.asarray(f(x + eye[a] - eye[b]))
                    - np.asarray(f(x - eye[a] + eye[b]))
                    + np.asarray(f(x - eye[a] - eye[b]))
                ) / (4 * h * h)
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        best = np.maximum(best, [np.max(np.abs(np.linalg.eigvalsh(Hj))) for Hj in H])
    return safety * best


def known_fn_error_box(hessian_bound, X: Zonotope, u=None, norm: str = "generators") -> Box:
    """Linearisation-error box ``0.5 * M_j * eps^2`` of a known C^2 map.

    ``hessian_bound`` is either an array of per-component bounds ``M_j`` or a
    callable ``(hull_of_X, u) -> M`` returning them.
    """
    eps = zonotope_norm(X, X.center, norm)
    M = hessian_bound(zonotope_interval_hull(X), u) if callable(hessian_bound) else hessian_bound
    M = np.atleast_1d(np.asarray(M, dtype=float))
    return Box.zero_centered(0.5 * M * eps**2)


@dataclass(frozen=True, eq=False)
class LearnedErrorTerms:
    """The three summands of a learned-function error radius."""

    linearization: np.ndarray
    epistemic: np.ndarray
    std_approx: np.ndarray

    @property
    def box(self) -> Box:
        return Box.zero_centered(self.linearization + self.epistemic + self.std_approx)


def learned_fn_terms(model: GPModel, lips: LipschitzConstants, X: Zonotope, u, beta: float | None = None, norm: str = "generators") -> LearnedErrorTerms:
    beta = model.beta_ if beta is None else beta
    xbar = X.center
    eps = zonotope_norm(X, xbar, norm)
    z = np.concatenate([xbar, np.atleast_1d(np.asarray(u, dtype=float))])
    _, std = model.posterior(z)
    m = std.shape[0]
    ones = np.ones(m)
    return LearnedErrorTerms(
        ones * 0.5 * np.asarray(lips.grad_mean) * eps**2,
        beta * std,
        ones * beta * np.asarray(lips.std_dev) * math.sqrt(eps),
    )


def learned_fn_error_box(model: GPModel, lips: LipschitzConstants, X: Zonotope, u, beta: float | None = None, norm: str = "generators") -> Box:
    """Radius ``0.5 L_grad eps^2 + beta sigma(xbar, u) + beta L_sigma sqrt(eps)`` per output."""
    return learned_fn_terms(model, lips, X, u, beta, norm).box


def _sum_boxes(*boxes: Box) -> Box:
    dims = {b.dim for b in boxes}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch among boxes: {sorted(dims)}")
    return Box(sum(b.center for b in boxes), sum(b.radius for b in boxes))


def dynamics_error_box(Rf: Box, Rg: Box, W: Box) -> Box:
    return _sum_boxes(Rf, Rg, W)


def observation_error_box(Rh: Box, V: Box) -> Box:
    return _sum_boxes(Rh, V)
