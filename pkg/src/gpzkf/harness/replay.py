"""Offline replay of measurement sequences from CSV.

Columns: ``trial, t, u_1..u_m, y_1..y_p, x0_1..x0_n`` and optionally
``truth_1..truth_n``. Each trial starts with a ``t = 0`` row whose ``y``
cells are blank and whose ``x0`` cells give the center of the initial set;
later rows leave ``x0`` blank. Rows of a trial must have consecutive ``t``.
"""
from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .experiment import SCHEMA_VERSION, archive_hash, build_context, run_sequence
from .metrics import compute_metrics


class ReplaySchemaError(ValueError):
    pass


def _groups(header, prefix):
    cols = [h for h in header if re.fullmatch(rf"{prefix}_\d+", h)]
    return sorted(cols, key=lambda h: int(h.split("_")[1]))


def write_replay_csv(trials, path, include_truth: bool = True) -> Path:
    """Measurement CSV for archive trials (the format read by :func:`read_replay_csv`)."""
    path = Path(path)
    nx = len(trials[0]["truth"][0])
    ny = len(trials[0]["measurements"][1])
    head = ["trial", "t", "u_1"] + [f"y_{j + 1}" for j in range(ny)] + [f"x0_{j + 1}" for j in range(nx)]
    if include_truth:
        head += [f"truth_{j + 1}" for j in range(nx)]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for tr in trials:
            for t, x in enumerate(tr["truth"]):
                y = tr["measurements"][t]
                row = [tr["trial"], t, repr(0.0)]
                row += [""] * ny if y is None else [repr(float(v)) for v in y]
                row += [repr(float(v)) for v in tr["truth"][0]] if t == 0 else [""] * nx
                if include_truth:
                    row += [repr(float(v)) for v in x]
                w.writerow(row)
    return path


def read_replay_csv(path) -> list[dict]:
    """Parse and validate; errors name the 1-based data row (header is row 0)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReplaySchemaError("row 0: empty file, header expected") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    for need in ("trial", "t"):
        if need not in header:
            raise ReplaySchemaError(f"row 0: missing column {need!r}")
    ucols, ycols, x0cols, tcols = (_groups(header, p) for p in ("u", "y", "x0", "truth"))
    if not ycols or not x0cols:
        raise ReplaySchemaError("row 0: need y_* and x0_* columns")
    if tcols and len(tcols) != len(x0cols):
        raise ReplaySchemaError("row 0: truth_* and x0_* column counts differ")
    idx = {h: i for i, h in enumerate(header)}

    def nums(row, cols, i, blank_ok=False):
        cells = [row[idx[c]].strip() for c in cols]
        if blank_ok and all(c == "" for c in cells):
            return None
        try:
            return [float(c) for c in cells]
        except ValueError:
            raise ReplaySchemaError(f"row {i}: non-numeric value in {cols}") from None

    trials: dict[int, dict] = {}
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ReplaySchemaError(f"row {i}: expected {len(header)} fields, got {len(row)}")
        try:
            tid, t = int(row[idx["trial"]]), int(row[idx["t"]])
        except ValueError:
            raise ReplaySchemaError(f"row {i}: trial and t must be integers") from None
        tr = trials.setdefault(tid, {"trial": tid, "u": [], "y": [], "truth": [] if tcols else None, "x0": None})
        if t != len(tr["y"]):
            raise ReplaySchemaError(f"row {i}: trial {tid} expected t={len(tr['y'])}, got t={t}")
        u = nums(row, ucols, i) if ucols else [0.0]
        if t == 0:
            tr["x0"] = nums(row, x0cols, i)
            y = nums(row, ycols, i, blank_ok=True)
            if y is not None:
                raise ReplaySchemaError(f"row {i}: y must be blank at t=0")
        else:
            y = nums(row, ycols, i)
        tr["u"].append(u)
        tr["y"].append(y)
        if tcols:
            tr["truth"].append(nums(row, tcols, i))
    for tr in trials.values():
        if len(tr["y"]) < 2:
            raise ReplaySchemaError(f"trial {tr['trial']}: needs at least one measurement row")
    return [trials[k] for k in sorted(trials)]


def replay_offline(path, cfg: ExperimentConfig, seed: int | None = None) -> dict:
    """Run the configured estimators on a measurement CSV; returns an archive plus metrics."""
    seqs = read_replay_csv(path)
    seed = cfg.seeds[0] if seed is None else seed
    ctx = build_context(cfg, seed)
    trials = []
    for sq in seqs:
        us = np.asarray(sq["u"], dtype=float)
        ys = [np.full(len(sq["y"][1]), np.nan)] + [np.asarray(y) for y in sq["y"][1:]]
        truth = None if sq["truth"] is None else np.asarray(sq["truth"], dtype=float)
        trials.append({
            "seed": seed,
            "trial": sq["trial"],
            "truth": None if truth is None else truth.tolist(),
            "measurements": [None] + [list(map(float, y)) for y in sq["y"][1:]],
            "estimators": [run_sequence(ctx, n, sq["x0"], us, ys, truth) for n in cfg.estimators],
        })
    archive = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "source": str(path), "trials": trials}
    archive["hash"] = archive_hash(archive)
    archive["metrics"] = [m.to_dict() for m in compute_metrics(trials, cfg.scenario.variant)]
    return archive
