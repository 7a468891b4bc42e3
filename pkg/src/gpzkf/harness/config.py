"""Experiment configuration: a YAML document mapped onto a frozen dataclass.

Key schema (every key optional, defaults shown by ``ExperimentConfig()``)::

    scenario:   {variant, default_rollouts, extra_rollouts, extra_obs_points,
                 starts, reps, horizon}
    pendulum:   {mass, length, gravity, damping, dt, lqr_q, lqr_r,
                 noise_w_deg, noise_v_deg}
    total_delta: 0.2
    budget:     {delta_g, delta_h, delta_w, delta_v}
    beta:       {g, h}
    estimators: [gp-zkf, gp-ekf]
    seeds:      [0]
    max_generators: null       # null -> 10 n_x, 0 -> no reduction
    out: results
    initial_radius: [0.1, 0.1]
    state_box:  {lo: [...], hi: [...]}   # overrides the computed box
    linearization_errors: true
    norm: generators
    lipschitz_samples: 400
    lipschitz_scale: 1.0
    gp:         {optimize, n_restarts, g: {signal_variance, lengthscales},
                 h: {signal_variance, lengthscales}}
    workers: 1
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from ..pendulum import PendulumParams, ShiftScenario
from ..uncertainty import BudgetSplit, split_budget

ESTIMATORS = ("gp-zkf", "gp-ekf")
NORMS = ("generators", "hull", "min")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class KernelInit:
    signal_variance: float = 1.0
    lengthscales: tuple = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class GPSettings:
    optimize: bool = True
    n_restarts: int = 3
    g: KernelInit = KernelInit(0.1, (1.0, 1.0, 1.0))
    h: KernelInit = KernelInit(1.0, (1.0, 1.0, 1.0))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ShiftScenario = field(default_factory=ShiftScenario)
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    total_delta: float = 0.2
    budget: BudgetSplit | None = None
    beta_g: float | None = None
    beta_h: float | None = None
    estimators: tuple = ESTIMATORS
    seeds: tuple = (0,)
    max_generators: int | None = None
    out: str = "results"
    initial_radius: tuple = (0.1, 0.1)
    state_box: tuple | None = None  # (lo, hi)
    linearization_errors: bool = True
    norm: str = "generators"
    lipschitz_samples: int = 400
    lipschitz_scale: float = 1.0
    gp: GPSettings = GPSettings()
    workers: int = 1

    def __post_init__(self):
        try:
            split_budget(self.total_delta, self.budget)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not self.estimators:
            raise ConfigError("estimator list is empty")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {list(ESTIMATORS)}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        for b in (self.beta_g, self.beta_h):
            if b is not None and b <= 0:
                raise ConfigError("beta overrides must be positive")
        if self.max_generators is not None and self.max_generators != 0 and self.max_generators < 2:
            raise ConfigError("max_generators must be 0 (off) or at least the state dimension")
        if len(self.initial_radius) != 2 or min(self.initial_radius) <= 0:
            raise ConfigError("initial_radius needs two positive entries")
        if self.state_box is not None:
            lo, hi = (np.asarray(v, dtype=float) for v in self.state_box)
            if lo.shape != (2,) or hi.shape != (2,) or np.any(hi < lo):
                raise ConfigError("state_box needs lo <= hi with two entries each")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {list(NORMS)}")
        if self.lipschitz_samples < 2 or self.lipschitz_scale < 0:
            raise ConfigError("lipschitz_samples >= 2 and lipschitz_scale >= 0 required")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        # degrees in the file, radians inside; the two must agree
        p = self.pendulum
        assert math.isclose(p.noise_w, p.noise_w_deg * math.pi / 180.0)
        assert math.isclose(p.noise_v, p.length * p.noise_v_deg * math.pi / 180.0)

    @property
    def split(self) -> BudgetSplit:
        return split_budget(self.total_delta, self.budget)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with CLI-style overrides; ``None`` values are ignored."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if "variant" in kw:
            kw["scenario"] = _build(ShiftScenario, {**_asdict(self.scenario), "variant": kw.pop("variant")}, "scenario")
        try:
            return replace(self, **kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        p = self.pendulum
        return {
            "scenario": _asdict(self.scenario),
            "pendulum": {
                "mass": p.mass, "length": p.length, "gravity": p.gravity, "damping": p.damping, "dt": p.dt,
                "lqr_q": p.lqr_q.tolist(), "lqr_r": p.lqr_r.tolist(),
                "noise_w_deg": p.noise_w_deg, "noise_v_deg": p.noise_v_deg,
            },
            "total_delta": self.total_delta,
            "budget": None if self.budget is None else vars(self.budget).copy(),
            "beta": {"g": self.beta_g, "h": self.beta_h},
            "estimators": list(self.estimators),
            "seeds": list(self.seeds),
            "max_generators": self.max_generators,
            "out": self.out,
            "initial_radius": list(self.initial_radius),
            "state_box": None if self.state_box is None else {"lo": list(self.state_box[0]), "hi": list(self.state_box[1])},
            "linearization_errors": self.linearization_errors,
            "norm": self.norm,
            "lipschitz_samples": self.lipschitz_samples,
            "lipschitz_scale": self.lipschitz_scale,
            "gp": {
                "optimize": self.gp.optimize,
                "n_restarts": self.gp.n_restarts,
                "g": {"signal_variance": self.gp.g.signal_variance, "lengthscales": list(self.gp.g.lengthscales)},
                "h": {"signal_variance": self.gp.h.signal_variance, "lengthscales": list(self.gp.h.lengthscales)},
            },
            "workers": self.workers,
        }


def _asdict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _kernel(raw, default: KernelInit, where) -> KernelInit:
    if raw is None:
        return default
    k = _build(KernelInit, raw, where)
    if k.signal_variance <= 0 or len(k.lengthscales) != 3 or min(k.lengthscales) <= 0:
        raise ConfigError(f"{where}: positive signal_variance and three positive lengthscales required")
    return KernelInit(float(k.signal_variance), tuple(float(v) for v in k.lengthscales))


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    known = {
        "scenario", "pendulum", "total_delta", "budget", "beta", "estimators", "seeds", "max_generators", "out",
        "initial_radius", "state_box", "linearization_errors", "norm", "lipschitz_samples", "lipschitz_scale",
        "gp", "workers",
    }
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    kw = {}
    kw["scenario"] = _build(ShiftScenario, raw.pop("scenario", None), "scenario")
    kw["pendulum"] = _build(PendulumParams, raw.pop("pendulum", None), "pendulum")
    if raw.get("budget") is not None:
        kw["budget"] = _build(BudgetSplit, raw.pop("budget"), "budget")
    raw.pop("budget", None)
    beta = raw.pop("beta", None) or {}
    if set(beta) - {"g", "h"}:
        raise ConfigError("beta: only keys g and h are allowed")
    kw["beta_g"], kw["beta_h"] = beta.get("g"), beta.get("h")
    gp = raw.pop("gp", None) or {}
    if set(gp) - {"optimize", "n_restarts", "g", "h"}:
        raise ConfigError("gp: unknown keys")
    base = GPSettings()
    kw["gp"] = GPSettings(
        bool(gp.get("optimize", base.optimize)),
        int(gp.get("n_restarts", base.n_restarts)),
        _kernel(gp.get("g"), base.g, "gp.g"),
        _kernel(gp.get("h"), base.h, "gp.h"),
    )
    sb = raw.pop("state_box", None)
    if sb is not None:
        if not isinstance(sb, dict) or set(sb) != {"lo", "hi"}:
            raise ConfigError("state_box needs keys lo and hi")
        kw["state_box"] = (tuple(sb["lo"]), tuple(sb["hi"]))
    for key in ("estimators", "seeds", "initial_radius"):
        if key in raw:
            v = raw.pop(key)
            kw[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
    kw.update(raw)
    try:
        return ExperimentConfig(**kw)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML in {path}: {e}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(raw)
