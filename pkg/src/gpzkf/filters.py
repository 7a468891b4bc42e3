"""GP-ZKF set-based estimator and the GP-EKF stochastic baseline.

GP-ZKF runs predict -> measure -> correct on zonotopes. GP-EKF runs the
same linearisations on a mean and covariance. Under the relaxed settings
returned by :func:`theorem2_mode` the two coincide step for step.
"""
from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import chi2
from sklearn.base import BaseEstimator

from .gpcore import GPModel, LipschitzConstants, estimate_lipschitz
from .uncertainty import (
    NoiseSpec,
    known_fn_error_box,
    learned_fn_error_box,
    learned_fn_terms,
    noise_box,
    observation_error_box,
    dynamics_error_box,
    sampled_hessian_bound,
)
from .zonogeom import (
    Box,
    Strip,
    Zonotope,
    affine_map,
    box_to_zonotope,
    intersect_strip,
    minkowski_sum,
    reduce_order,
    zonotope_interval_hull,
)

EKF_JITTER = 1e-9


class DomainError(ValueError):
    """A control or estimate left the domain the guarantees are stated on."""


def finite_difference_jacobian(f: Callable, x, u, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e, u)) - np.asarray(f(x - e, u))) / (2 * h))
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """``x' = f(x, u) + g(x, u) + w``, ``y = h(x, u) + v`` with GP-learned g and h."""

    state_dim: int
    control_dim: int
    meas_dim: int
    f: Callable
    gp_dynamics: GPModel
    gp_observation: GPModel
    noise_w: NoiseSpec
    noise_v: NoiseSpec
    control_domain: Box
    state_domain: Box
    f_jacobian: Callable | None = None
    f_hessian_bound: object = None

    def __post_init__(self):
        nx, nu, ny = self.state_dim, self.control_dim, self.meas_dim
        checks = [
            (self.gp_dynamics.n_features_in_ == nx + nu, "dynamics GP inputs"),
            (self.gp_dynamics.n_outputs_ == nx, "dynamics GP outputs"),
            (self.gp_observation.n_features_in_ == nx + nu, "observation GP inputs"),
            (self.gp_observation.n_outputs_ == ny, "observation GP outputs"),
            (self.noise_w.dim == nx, "process noise dim"),
            (self.noise_v.dim == ny, "measurement noise dim"),
            (self.control_domain.dim == nu, "control domain dim"),
            (self.state_domain.dim == nx, "state domain dim"),
            (bool(np.all(np.isfinite(self.control_domain.radius))), "control domain must be compact"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"inconsistent system: {what}")

    def jac_f(self, x, u) -> np.ndarray:
        if self.f_jacobian is not None:
            return np.atleast_2d(np.asarray(self.f_jacobian(x, u), dtype=float))
        return finite_difference_jacobian(self.f, x, u)

    def gp_input(self, x, u) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float), np.atleast_1d(np.asarray(u, dtype=float))])

    def input_domain(self) -> Box:
        return Box(
            np.concatenate([self.state_domain.center, self.control_domain.center]),
            np.concatenate([self.state_domain.radius, self.control_domain.radius]),
        )


@dataclass(frozen=True)
class ZkfOptions:
    """Knobs of GP-ZKF.

    ``noise_bounds``: ``"box"`` uses the high-probability boxes;
    ``"one_sigma"`` merges each model-error radius with the noise standard
    deviation in quadrature (the exact analogue of a covariance sum);
    ``"none"`` drops noise entirely.
    """

    beta_g: float | None = None
    beta_h: float | None = None
    noise_bounds: str = "box"
    linearization_errors: bool = True
    clip_state: bool = True
    max_generators: int | None = None  # None -> 10 * n_x, 0 -> no reduction
    gain_guard: bool = True
    check_domain: bool = True
    norm: str = "generators"

    def __post_init__(self):
        if self.noise_bounds not in ("box", "one_sigma", "none"):
            raise ValueError(f"unknown noise_bounds {self.noise_bounds!r}")

    def generator_cap(self, n_x: int) -> int | None:
        if self.max_generators == 0:
            return None
        return 10 * n_x if self.max_generators is None else self.max_generators


DEFAULT_OPTIONS = ZkfOptions()


@dataclass(frozen=True, eq=False)
class ZkfState:
    estimate: Zonotope
    time: int
    lips_g: LipschitzConstants
    lips_h: LipschitzConstants
    last_prediction: Zonotope | None = None
    last_strip: Strip | None = None
    last_gain: np.ndarray | None = None
    timing: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class EkfState:
    mean: np.ndarray
    cov: np.ndarray
    time: int = 0
    last_gain: np.ndarray | None = None


def _check_control(sys: SystemSpec, u):
    if not sys.control_domain.contains(np.atleast_1d(u)):
        raise DomainError(f"control {np.asarray(u).tolist()} outside the control domain")


def _noise_radius(spec: NoiseSpec, opts: ZkfOptions) -> np.ndarray:
    if opts.noise_bounds == "box":
        return noise_box(spec).radius
    if opts.noise_bounds == "one_sigma":
        return np.full(spec.dim, spec.std)
    return np.zeros(spec.dim)


def _combine(model_radius: np.ndarray, noise_radius: np.ndarray, opts: ZkfOptions) -> np.ndarray:
    if opts.noise_bounds == "one_sigma":
        return np.sqrt(model_radius**2 + noise_radius**2)
    return model_radius + noise_radius


def zkf_predict(state: ZkfState, sys: SystemSpec, u, options: ZkfOptions = DEFAULT_OPTIONS) -> Zonotope:
    """Dynamics-consistent zonotope for ``x_t`` given ``X_{t-1}`` and ``u_{t-1}``."""
    X = state.estimate
    if options.check_domain:
        _check_control(sys, u)
        if not sys.state_domain.contains_box(zonotope_interval_hull(X)):
            raise DomainError("estimate left the compact state domain")
    xbar = X.center
    z = sys.gp_input(xbar, u)
    A = sys.jac_f(xbar, u) + sys.gp_dynamics.mean_jacobian(z)[:, : sys.state_dim]
    mean_g, _ = sys.gp_dynamics.posterior(z)
    b = np.asarray(sys.f(xbar, u), dtype=float) + mean_g - A @ xbar

    lips = state.lips_g if options.linearization_errors else LipschitzConstants()
    Rg = learned_fn_error_box(sys.gp_dynamics, lips, X, u, beta=options.beta_g, norm=options.norm)
    if options.linearization_errors and sys.f_hessian_bound is not None:
        Rf = known_fn_error_box(sys.f_hessian_bound, X, u, options.norm)
    else:
        Rf = Box.zero_centered(np.zeros(sys.state_dim))
    W = _noise_radius(sys.noise_w, options)
    if options.noise_bounds == "one_sigma":
        Rd = Box.zero_centered(Rf.radius + _combine(Rg.radius, W, options))
    else:
        Rd = dynamics_error_box(Rf, Rg, Box.zero_centered(W))
    Xbar = minkowski_sum(affine_map(X, A, b), box_to_zonotope(Rd))
    cap = options.generator_cap(sys.state_dim)
    return Xbar if cap is None else reduce_order(Xbar, cap)


def zkf_measure(Xbar: Zonotope, sys: SystemSpec, u, y, lips_h: LipschitzConstants, options: ZkfOptions = DEFAULT_OPTIONS) -> Strip:
    """Measurement-consistent strip for ``y_t`` around the prediction."""
    if options.check_domain:
        _check_control(sys, u)
    xbar = Xbar.center
    z = sys.gp_input(xbar, u)
    J = sys.gp_observation.mean_jacobian(z)[:, : sys.state_dim]
    mean_h, _ = sys.gp_observation.posterior(z)
    lips = lips_h if options.linearization_errors else LipschitzConstants()
    Rh = learned_fn_error_box(sys.gp_observation, lips, Xbar, u, beta=options.beta_h, norm=options.norm)
    V = _noise_radius(sys.noise_v, options)
    if options.noise_bounds == "one_sigma":
        Ro = Box.zero_centered(_combine(Rh.radius, V, options))
    else:
        Ro = observation_error_box(Rh, Box.zero_centered(V))
    return Strip(J, np.asarray(y, dtype=float) - mean_h + J @ xbar, Ro)


def _shrinks(Znew: Zonotope, Zold: Zonotope) -> bool:
    """Correction acceptance test: no hull coordinate and no Frobenius norm grows."""
    h_new = np.abs(Znew.generators).sum(axis=1)
    h_old = np.abs(Zold.generators).sum(axis=1)
    tol = 1e-12 * max(1.0, float(np.max(h_old, initial=0.0)))
    if np.any(h_new > h_old + tol):
        return False
    return np.linalg.norm(Znew.generators) <= np.linalg.norm(Zold.generators) * (1 + 1e-12)


def _guarded_intersection(Z: Zonotope, S: Strip, guard: bool):
    """Batch strip intersection; under ``guard``, fall back to row-by-row.

    Rows are tried from most to least informative and each is kept only if it
    does not enlarge the set. Returns the zonotope and the effective gain
    mapping ``offset + bound.center - map @ center`` to the center update.
    """
    Zc, lam = intersect_strip(Z, S)
    if not guard or _shrinks(Zc, Z):
        return Zc, lam
    m = S.map.shape[0]
    width = np.abs(S.map @ Z.generators).sum(axis=1)
    ratio = S.bound.radius / np.maximum(width, 1e-300)
    cur = Z
    for i in np.argsort(ratio, kind="stable"):
        row = Strip(S.map[i : i + 1], S.offset[i : i + 1], Box(S.bound.center[i : i + 1], S.bound.radius[i : i + 1]))
        cand, _ = intersect_strip(cur, row)
        if _shrinks(cand, cur):
            cur = cand
    # gain consistent with the center shift, for reporting
    innov = S.offset + S.bound.center - S.map @ Z.center
    eff = np.outer(cur.center - Z.center, innov) / max(float(innov @ innov), 1e-300) if np.any(innov) else np.zeros((Z.dim, m))
    return cur, eff


def clip_to_box(Z: Zonotope, box: Box, guard: bool = True) -> Zonotope:
    """Outer approximation of ``Z ∩ box`` by one-row strip intersections.

    Dimensions where the hull of ``Z`` already lies in ``box`` are exact and
    skipped. If the result still pokes out of ``box`` (or, under ``guard``,
    grew anywhere) the hull-box intersection replaces it.
    """
    start = Z
    for j in range(Z.dim):
        hull = zonotope_interval_hull(Z)
        if hull.lo[j] >= box.lo[j] and hull.hi[j] <= box.hi[j]:
            continue
        row = np.zeros((1, Z.dim))
        row[0, j] = 1.0
        S = Strip(row, np.zeros(1), Box(box.center[j : j + 1], box.radius[j : j + 1]))
        Z, _ = intersect_strip(Z, S)
    hull = zonotope_interval_hull(Z)
    if not box.contains_box(hull) or (guard and Z is not start and not _shrinks(Z, start)):
        Z = box_to_zonotope(zonotope_interval_hull(start).intersect(box))
    return Z


def zkf_correct(Xbar: Zonotope, S: Strip, statebox: Box, options: ZkfOptions = DEFAULT_OPTIONS):
    """Outer-approximate ``Xbar ∩ S ∩ statebox``; returns the estimate and the strip gain."""
    Z, lam = _guarded_intersection(Xbar, S, options.gain_guard)
    if options.clip_state:
        Z = clip_to_box(Z, statebox, options.gain_guard)
    cap = options.generator_cap(Xbar.dim)
    if cap is not None:
        Z = reduce_order(Z, cap)
    return Z, lam


def zkf_step(state: ZkfState, sys: SystemSpec, u_prev, u_now, y, options: ZkfOptions = DEFAULT_OPTIONS) -> ZkfState:
    t0 = time.perf_counter()
    Xbar = zkf_predict(state, sys, u_prev, options)
    t1 = time.perf_counter()
    S = zkf_measure(Xbar, sys, u_now, y, state.lips_h, options)
    t2 = time.perf_counter()
    Xhat, lam = zkf_correct(Xbar, S, sys.state_domain, options)
    t3 = time.perf_counter()
    return ZkfState(
        estimate=Xhat,
        time=state.time + 1,
        lips_g=state.lips_g,
        lips_h=state.lips_h,
        last_prediction=Xbar,
        last_strip=S,
        last_gain=lam,
        timing={"predict": t1 - t0, "measure": t2 - t1, "correct": t3 - t2, "total": t3 - t0},
    )


def gpekf_step(state: EkfState, sys: SystemSpec, u_prev, u_now, y) -> EkfState:
    """One GP-EKF predict/update with a Joseph-form covariance update."""
    mu, P = state.mean, state.cov
    nx = sys.state_dim
    z = sys.gp_input(mu, u_prev)
    A = sys.jac_f(mu, u_prev) + sys.gp_dynamics.mean_jacobian(z)[:, :nx]
    mg, sg = sys.gp_dynamics.posterior(z)
    mu_bar = np.asarray(sys.f(mu, u_prev), dtype=float) + mg
    Q = np.diag(sg**2) + sys.noise_w.std**2 * np.eye(nx)
    P_bar = A @ P @ A.T + Q

    z = sys.gp_input(mu_bar, u_now)
    C = sys.gp_observation.mean_jacobian(z)[:, :nx]
    mh, sh = sys.gp_observation.posterior(z)
    R = np.diag(sh**2) + sys.noise_v.std**2 * np.eye(sys.meas_dim)
    S = C @ P_bar @ C.T + R
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        S = S + EKF_JITTER * np.eye(S.shape[0])
    K = np.linalg.solve(S.T, (P_bar @ C.T).T).T
    mu_new = mu_bar + K @ (np.asarray(y, dtype=float) - mh)
    IKC = np.eye(nx) - K @ C
    P_new = IKC @ P_bar @ IKC.T + K @ R @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    return EkfState(mu_new, P_new, state.time + 1, K)


@dataclass(frozen=True)
class Theorem2Flags:
    unit_beta: bool = True
    omit_noise_bounds: bool = True
    omit_linearization: bool = True
    skip_state_clip: bool = True
    # True keeps the noise as a one-standard-deviation term; False drops it
    noise_as_one_sigma: bool = True


def theorem2_options(flags: Theorem2Flags = Theorem2Flags(), base: ZkfOptions = DEFAULT_OPTIONS) -> ZkfOptions:
    opts = base
    if flags.unit_beta:
        opts = replace(opts, beta_g=1.0, beta_h=1.0)
    if flags.omit_noise_bounds:
        opts = replace(opts, noise_bounds="one_sigma" if flags.noise_as_one_sigma else "none")
    if flags.omit_linearization:
        opts = replace(opts, linearization_errors=False)
    if flags.skip_state_clip:
        opts = replace(opts, clip_state=False, check_domain=False)
    return replace(opts, max_generators=0, gain_guard=False)


def theorem2_mode(sys: SystemSpec, flags: Theorem2Flags = Theorem2Flags()):
    """GP-ZKF step function with the relaxations under which it equals GP-EKF."""
    opts = theorem2_options(flags)
    return functools.partial(zkf_step, sys=sys, options=opts)


# estimator objects used by the harness


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    mean: np.ndarray
    cov: np.ndarray
    scale: float  # chi-square quantile

    def contains(self, x) -> bool:
        d = np.asarray(x, dtype=float) - self.mean
        try:
            m = float(d @ np.linalg.solve(self.cov, d))
        except np.linalg.LinAlgError:
            m = float(d @ np.linalg.pinv(self.cov) @ d)
        return m <= self.scale

    def hull_radius(self) -> np.ndarray:
        return np.sqrt(self.scale * np.clip(np.diag(self.cov), 0.0, None))


@dataclass(frozen=True, eq=False)
class StepRecord:
    point_estimate: np.ndarray
    set_descriptor: object  # Zonotope or Ellipsoid
    step_time: float
    state: object = None


class GPZKF(BaseEstimator):
    """Recursive set-based estimator with sklearn-style parameter access."""

    def __init__(self, system: SystemSpec, options: ZkfOptions = DEFAULT_OPTIONS, lips_g=None, lips_h=None, lipschitz_samples=400, seed=0):
        self.system = system
        self.options = options
        self.lips_g = lips_g
        self.lips_h = lips_h
        self.lipschitz_samples = lipschitz_samples
        self.seed = seed

    def lipschitz_constants(self):
        sys = self.system
        dims = np.arange(sys.state_dim)
        dom = sys.input_domain()
        lg = self.lips_g or estimate_lipschitz(sys.gp_dynamics, dom, self.lipschitz_samples, dims, seed=self.seed)
        lh = self.lips_h or estimate_lipschitz(sys.gp_observation, dom, self.lipschitz_samples, dims, seed=self.seed + 1)
        return lg, lh

    def init(self, X0: Zonotope):
        lg, lh = self.lipschitz_constants()
        self.lips_g_, self.lips_h_ = lg, lh
        self.state_ = ZkfState(X0, 0, lg, lh)
        return self

    def step(self, u_prev, u_now, y) -> StepRecord:
        t0 = time.perf_counter()
        self.state_ = zkf_step(self.state_, self.system, u_prev, u_now, y, self.options)
        dt = time.perf_counter() - t0
        return StepRecord(self.state_.estimate.center, self.state_.estimate, dt, self.state_)


class GPEKF(BaseEstimator):
    """GP-EKF baseline; its set is the ``confidence`` ellipsoid of the covariance."""

    def __init__(self, system: SystemSpec, confidence=0.95):
        self.system = system
        self.confidence = confidence

    def init(self, X0: Zonotope | None = None, mean=None, cov=None):
        if X0 is not None:
            mean, cov = X0.center, X0.covariation()
        self.state_ = EkfState(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float))
        self.scale_ = float(chi2.ppf(self.confidence, self.system.state_dim))
        return self

    def step(self, u_prev, u_now, y) -> StepRecord:
        t0 = time.perf_counter()
        self.state_ = gpekf_step(self.state_, self.system, u_prev, u_now, y)
        dt = time.perf_counter() - t0
        return StepRecord(self.state_.mean, Ellipsoid(self.state_.mean, self.state_.cov, self.scale_), dt, self.state_)
