"""Simulated inverted pendulum under LQR feedback.

State is ``(theta, theta_dot)`` with ``theta = 0`` upright. Angles are kept
in the principal range, so the nominal test region ``[pi, 2 pi]`` is
represented as ``[-pi, 0]``. The known model is the closed-loop system
linearised about the upright set-point; the GP learns the remainder.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .zonogeom import Box

VARIANTS = ("both", "dynamics", "observation", "none")


class RiccatiError(RuntimeError):
    pass


def wrap_angle(theta):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)


@dataclass(frozen=True, eq=False)
class PendulumParams:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    damping: float = 0.1
    dt: float = 0.05
    lqr_q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    lqr_r: np.ndarray = field(default_factory=lambda: np.array([[1.0]]))
    noise_w_deg: float = 7.16
    noise_v_deg: float = 8.88

    def __post_init__(self):
        for name in ("mass", "length", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gravity", "damping"):  # zero allowed for limit cases
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("lqr_q", "lqr_r"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, M)

    @property
    def noise_w(self) -> float:
        """Process-noise std in rad (and rad/s)."""
        return math.radians(self.noise_w_deg)

    @property
    def noise_v(self) -> float:
        """Measurement-noise std: the angular value converted to arc length."""
        return self.length * math.radians(self.noise_v_deg)

    def linearization(self):
        """Discrete ``(A, B)`` of the semi-implicit Euler step at the upright point."""
        dt = self.dt
        a = self.gravity / self.length
        c = self.damping / (self.mass * self.length**2)
        e = 1.0 / (self.mass * self.length**2)
        A = np.array([[1 + dt * dt * a, dt - dt * dt * c], [dt * a, 1 - dt * c]])
        B = np.array([[dt * dt * e], [dt * e]])
        return A, B


def solve_dare(A, B, Q, R, tol=1e-12, max_iter=10_000):
    P = np.array(Q, dtype=float)
    for _ in range(max_iter):
        BtP = B.T @ P
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
        if np.max(np.abs(P_next - P)) < tol * max(1.0, np.max(np.abs(P))):
            return P_next
        P = P_next
    raise RiccatiError("Riccati iteration did not converge")


def lqr_gain(params: PendulumParams) -> np.ndarray:
    A, B = params.linearization()
    P = solve_dare(A, B, params.lqr_q, params.lqr_r)
    return np.linalg.solve(params.lqr_r + B.T @ P @ B, B.T @ P @ A)


class Pendulum:
    """Closed-loop pendulum; caches the LQR gain and the known linear model."""

    def __init__(self, params: PendulumParams | None = None):
        self.params = params or PendulumParams()
        self.K = lqr_gain(self.params)
        A, B = self.params.linearization()
        self.A_cl = A - B @ self.K

    def open_loop_step(self, x, torque):
        p = self.params
        theta, omega = x
        acc = (p.gravity / p.length) * math.sin(theta) - p.damping / (p.mass * p.length**2) * omega + torque / (p.mass * p.length**2)
        omega_next = omega + p.dt * acc
        return np.array([theta + p.dt * omega_next, omega_next])

    def true_dynamics(self, x, w=None):
        x = np.asarray(x, dtype=float)
        torque = -float(self.K[0] @ x)
        nxt = self.open_loop_step(x, torque)
        return nxt if w is None else nxt + w

    def true_observation(self, x, v=None):
        l = self.params.length
        theta, omega = x
        y = np.array([l * math.sin(theta), -l * math.cos(theta), l * omega * math.cos(theta), l * omega * math.sin(theta)])
        return y if v is None else y + v

    def known_model_f(self, x, u=None):
        return self.A_cl @ np.asarray(x, dtype=float)

    def known_model_jacobian(self, x=None, u=None):
        return self.A_cl

    def residual(self, x):
        """``g(x) = d(x) - f(x)`` without noise."""
        return self.true_dynamics(x) - self.known_model_f(x)

    def energy(self, x):
        p = self.params
        theta, omega = x
        return 0.5 * p.mass * p.length**2 * omega**2 + p.mass * p.gravity * p.length * math.cos(theta)

    def rollout(self, x0, horizon: int, rng: np.random.Generator):
        """States ``x_0..x_T`` and measurements (row 0 is NaN: no ``y_0``)."""
        lw, lv = self.params.noise_w, self.params.noise_v
        xs = [np.asarray(x0, dtype=float)]
        ys = [np.full(4, np.nan)]
        for _ in range(horizon):
            xs.append(self.true_dynamics(xs[-1], rng.normal(0.0, lw, 2)))
            ys.append(self.true_observation(xs[-1], rng.normal(0.0, lv, 4)))
        return np.array(xs), np.array(ys)


@dataclass(frozen=True)
class ShiftScenario:
    variant: str = "none"
    default_rollouts: int = 9
    extra_rollouts: int = 5
    extra_obs_points: int = 75
    train_region: tuple = (0.0, math.pi)
    test_region: tuple = (math.pi, 2 * math.pi)
    obs_velocity_range: tuple = (0.0, 6.0)
    starts: int = 4
    reps: int = 10
    horizon: int = 15

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scenario variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("default_rollouts", "extra_rollouts", "extra_obs_points", "starts", "reps", "horizon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def shift_dynamics(self) -> bool:
        """True when the dynamics GP sees only training-region data."""
        return self.variant in ("both", "dynamics")

    @property
    def shift_observation(self) -> bool:
        return self.variant in ("both", "observation")


def region_interval(region) -> tuple[float, float]:
    """Region bounds in wrapped coordinates."""
    lo, hi = region
    if hi > math.pi + 1e-12:
        lo, hi = lo - 2 * math.pi, hi - 2 * math.pi
    return lo, hi


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray  # (n, 3): theta, theta_dot, u
    outputs: np.ndarray
    split: np.ndarray  # "default" / "extra"
    rollout: np.ndarray
    t: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioData:
    train_g: Dataset
    train_h: Dataset
    test_starts: np.ndarray  # (starts, 2)


def _region_mask(theta, region):
    lo, hi = region_interval(region)
    th = wrap_angle(theta)
    return (th >= lo) & (th <= hi)


def _rollout_data(pend: Pendulum, region, n_rollouts, horizon, rng, split, first_id):
    lo, hi = region_interval(region)
    g_rows, h_rows = [], []
    for r in range(n_rollouts):
        x0 = np.array([rng.uniform(lo, hi), 0.0])
        xs, ys = pend.rollout(x0, horizon, rng)
        for t in range(horizon):
            x = xs[t]
            if _region_mask(x[0], region):
                g_rows.append((x, xs[t + 1] - pend.known_model_f(x), first_id + r, t))
            if t > 0 and _region_mask(x[0], region):
                h_rows.append((x, ys[t], first_id + r, t))
        if _region_mask(xs[horizon][0], region):
            h_rows.append((xs[horizon], ys[horizon], first_id + r, horizon))
    return g_rows, h_rows


def _as_dataset(rows, split_tags) -> Dataset:
    if not rows:
        return Dataset(np.zeros((0, 3)), np.zeros((0, 2)), np.array([], dtype=str), np.array([], dtype=int), np.array([], dtype=int))
    X = np.array([np.append(r[0], 0.0) for r in rows])
    Y = np.array([r[1] for r in rows])
    return Dataset(X, Y, np.array(split_tags), np.array([r[2] for r in rows]), np.array([r[3] for r in rows]))


def generate_scenario(s: ShiftScenario, seed: int, params: PendulumParams | None = None) -> ScenarioData:
    """Training sets for g and h plus the test starting states, all from ``seed``."""
    pend = Pendulum(params)
    ss = np.random.SeedSequence(seed)
    r_default, r_extra_g, r_extra_h, r_starts = (np.random.default_rng(c) for c in ss.spawn(4))

    g_rows, h_rows = _rollout_data(pend, s.train_region, s.default_rollouts, s.horizon, r_default, "default", 0)
    g_tags = ["default"] * len(g_rows)
    h_tags = ["default"] * len(h_rows)

    # always drawn so every variant shares the same default data
    g_extra, _ = _rollout_data(pend, s.test_region, s.extra_rollouts, s.horizon, r_extra_g, "extra", s.default_rollouts)
    lo, hi = region_interval(s.test_region)
    vlo, vhi = s.obs_velocity_range
    h_extra = []
    for i in range(s.extra_obs_points):
        x = np.array([r_extra_h.uniform(lo, hi), r_extra_h.uniform(vlo, vhi)])
        h_extra.append((x, pend.true_observation(x, r_extra_h.normal(0.0, pend.params.noise_v, 4)), -1, i))

    if not s.shift_dynamics:
        g_rows += g_extra
        g_tags += ["extra"] * len(g_extra)
    if not s.shift_observation:
        h_rows += h_extra
        h_tags += ["extra"] * len(h_extra)

    starts = np.column_stack([r_starts.uniform(lo, hi, s.starts), np.zeros(s.starts)])
    return ScenarioData(_as_dataset(g_rows, g_tags), _as_dataset(h_rows, h_tags), starts)


def write_dataset_csv(ds: Dataset, path, kind: str) -> None:
    """``kind`` is ``"g"`` (residual_1..2) or ``"h"`` (y_1..4)."""
    prefix = "residual" if kind == "g" else "y"
    head = ["rollout", "t", "theta", "theta_dot"] + [f"{prefix}_{j + 1}" for j in range(ds.outputs.shape[1] if ds.outputs.size else (2 if kind == "g" else 4))] + ["split"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for i in range(ds.inputs.shape[0]):
            w.writerow([int(ds.rollout[i]), int(ds.t[i]), repr(float(ds.inputs[i, 0])), repr(float(ds.inputs[i, 1]))] + [repr(float(v)) for v in ds.outputs[i]] + [ds.split[i]])

