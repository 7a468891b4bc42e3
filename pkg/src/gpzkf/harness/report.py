"""Table and per-step outputs.

``table.csv`` columns, in order::

    Data shift, Method, RMSE, Incl., Radius, Time, Joint incl.

RMSE and Radius hold one value per state dimension separated by spaces.
Incl. and Joint incl. are percentages, Time is seconds per step. Missing
values (no truth available) are written as ``n/a``. ``table.json`` holds the
full rows and reads back with :func:`read_table_json`.

``steps.csv`` columns::

    seed, trial, estimator, t, truth_1..n, center_1..n, radius_1..n, included
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .metrics import MetricsRow

TABLE_COLUMNS = ("Data shift", "Method", "RMSE", "Incl.", "Radius", "Time", "Joint incl.")
METHOD_NAMES = {"gp-zkf": "GP-ZKF", "gp-ekf": "GP-EKF"}
SHIFT_NAMES = {"both": "Both", "dynamics": "Dynamics", "observation": "Observation", "none": "None"}


def _vec(v):
    return "n/a" if v is None else " ".join(f"{x:.4g}" for x in v)


def _num(v, fmt):
    return "n/a" if v is None else format(v, fmt)


def table_rows(metrics) -> list[list[str]]:
    return [
        [
            SHIFT_NAMES.get(m.scenario, m.scenario),
            METHOD_NAMES.get(m.estimator, m.estimator),
            _vec(m.rmse),
            _num(m.inclusion_pct, ".2f"),
            _vec(m.avg_radius),
            _num(m.avg_step_time, ".4g"),
            _num(m.joint_pct, ".2f"),
        ]
        for m in metrics
    ]


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from None


def emit_report(metrics, out_dir, formats=("csv", "json"), archive: dict | None = None) -> list[Path]:
    """Write the table (and ``steps.csv`` when ``archive`` is given); returns the paths."""
    out = Path(out_dir)
    written = []
    if "csv" in formats:
        p = out / "table.csv"
        with _open(p) as fh:
            w = csv.writer(fh)
            w.writerow(TABLE_COLUMNS)
            w.writerows(table_rows(metrics))
        written.append(p)
    if "json" in formats:
        p = out / "table.json"
        with _open(p) as fh:
            json.dump({"columns": list(TABLE_COLUMNS), "rows": [m.to_dict() for m in metrics]}, fh, indent=2)
        written.append(p)
    if archive is not None:
        written.append(write_steps_csv(archive, out / "steps.csv"))
    return written


def read_table_json(path) -> list[MetricsRow]:
    with open(path) as fh:
        return [MetricsRow.from_dict(r) for r in json.load(fh)["rows"]]


def write_steps_csv(archive: dict, path) -> Path:
    path = Path(path)
    trials = archive["trials"]
    n = len(trials[0]["estimators"][0]["radius"][0]) if trials and trials[0]["estimators"][0]["radius"] else 2
    head = ["seed", "trial", "estimator", "t"]
    head += [f"truth_{j + 1}" for j in range(n)] + [f"center_{j + 1}" for j in range(n)] + [f"radius_{j + 1}" for j in range(n)]
    head.append("included")
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for tr in trials:
            truth = tr.get("truth")
            for e in tr["estimators"]:
                for k, (c, r) in enumerate(zip(e["center"], e["radius"])):
                    x = truth[k + 1] if truth is not None else [""] * n
                    inc = "" if e["included"] is None else int(e["included"][k])
                    w.writerow([tr.get("seed", ""), tr["trial"], e["estimator"], k + 1, *x, *c, *r, inc])
    return path
