"""Table metrics from trial traces.

RMSE is per state dimension, pooled over every step of every trial.
Inclusion is the percentage of steps whose set contains the true state;
the joint rate counts trials contained at all steps. Radius is the mean
interval-hull radius. Trials without truth contribute radius and time only.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    scenario: str
    rmse: tuple | None
    inclusion_pct: float | None
    joint_pct: float | None
    avg_radius: tuple
    avg_step_time: float
    n_trials: int
    n_steps: int
    n_failed: int

    def __post_init__(self):
        for v in (self.inclusion_pct, self.joint_pct):
            if v is not None and not 0.0 <= v <= 100.0:
                raise ValueError("percentages must lie in [0, 100]")
        if any(r < 0 for r in self.avg_radius):
            raise ValueError("radii must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("rmse", "avg_radius"):
            d[k] = None if d[k] is None else list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRow":
        d = dict(d)
        d["rmse"] = None if d["rmse"] is None else tuple(d["rmse"])
        d["avg_radius"] = tuple(d["avg_radius"])
        return cls(**d)


def compute_metrics(traces, scenario: str = "") -> list[MetricsRow]:
    """One row per estimator, in order of first appearance.

    ``traces`` is a list of trial dicts as stored in the results archive
    (``truth`` of length ``T+1`` or ``None``; one entry per estimator).
    """
    if not traces:
        raise ValueError("no traces to summarise")
    names = []
    for tr in traces:
        for e in tr["estimators"]:
            if e["estimator"] not in names:
                names.append(e["estimator"])
    rows = []
    for name in names:
        sq, inc, joint, rad, times = [], [], [], [], []
        failed = n_trials = 0
        has_truth = True
        for tr in traces:
            for e in tr["estimators"]:
                if e["estimator"] != name:
                    continue
                n_trials += 1
                ok = e["status"] == "ok"
                failed += not ok
                k = len(e["center"])
                rad.extend(e["radius"])
                times.extend(e["step_time"])
                if tr.get("truth") is None or e["included"] is None:
                    has_truth = False
                    continue
                truth = np.asarray(tr["truth"], dtype=float)[1 : k + 1]
                if k:
                    sq.append((np.asarray(e["center"]) - truth) ** 2)
                inc.extend(bool(v) for v in e["included"])
                joint.append(ok and all(e["included"]))
        n_steps = len(rad)
        rmse = tuple(np.sqrt(np.mean(np.vstack(sq), axis=0)).tolist()) if has_truth and sq else None
        rows.append(
            MetricsRow(
                estimator=name,
                scenario=scenario,
                rmse=rmse,
                inclusion_pct=100.0 * float(np.mean(inc)) if has_truth and inc else None,
                joint_pct=100.0 * float(np.mean(joint)) if has_truth and joint else None,
                avg_radius=tuple(np.mean(np.asarray(rad), axis=0).tolist()) if rad else (),
                avg_step_time=float(np.mean(times)) if times else 0.0,
                n_trials=n_trials,
                n_steps=n_steps,
                n_failed=failed,
            )
        )
    return rows


def archive_metrics(archive: dict) -> list[MetricsRow]:
    return compute_metrics(archive["trials"], archive["config"]["scenario"]["variant"])
