"""``gpzkf`` command line.

Exit status: 0 success, 1 failed trials (or a failed equivalence check),
2 configuration or input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..pendulum import VARIANTS, Pendulum, generate_scenario, write_dataset_csv
from .config import ESTIMATORS, ConfigError, ExperimentConfig, load_config
from .experiment import build_context, n_failed, run_experiment, theorem2_check, trial_rng
from .metrics import MetricsRow, archive_metrics, compute_metrics
from .replay import ReplaySchemaError, replay_offline, write_replay_csv
from .report import TABLE_COLUMNS, emit_report, table_rows

log = logging.getLogger("gpzkf")
THEOREM2_TOL = 1e-8


def _estimators(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"estimators must be a comma list from {','.join(ESTIMATORS)}")
    return names


def _common(p, scenario=True):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the seed list with one seed")
    p.add_argument("--out", type=Path, help="output directory")
    if scenario:
        p.add_argument("--scenario", choices=VARIANTS, help="data-shift variant")
        p.add_argument("--estimators", type=_estimators, help="comma list, e.g. gp-zkf,gp-ekf")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpzkf", description="GP-ZKF set-based estimation benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit training datasets and test measurement sequences")
    _common(p)

    p = sub.add_parser("run", help="run an experiment from a config")
    _common(p)
    p.add_argument("--theorem2-check", action="store_true", help="also verify the relaxed-filter equivalence")
    p.add_argument("--workers", type=int, help="parallel trial workers")

    p = sub.add_parser("replay", help="run estimators on an offline measurement CSV")
    p.add_argument("csv", type=Path)
    _common(p)

    p = sub.add_parser("report", help="re-derive tables from a results archive")
    p.add_argument("archive", type=Path)
    p.add_argument("--out", type=Path)
    return ap


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    return cfg.with_overrides(
        variant=getattr(args, "scenario", None),
        estimators=getattr(args, "estimators", None),
        seeds=None if getattr(args, "seed", None) is None else (args.seed,),
        out=None if getattr(args, "out", None) is None else str(args.out),
        workers=getattr(args, "workers", None),
    )


def _print_table(metrics):
    print(" | ".join(TABLE_COLUMNS))
    for r in table_rows(metrics):
        print(" | ".join(r))


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        data = generate_scenario(cfg.scenario, seed, cfg.pendulum)
        write_dataset_csv(data.train_g, out / f"train_g_seed{seed}.csv", "g")
        write_dataset_csv(data.train_h, out / f"train_h_seed{seed}.csv", "h")
        pend = Pendulum(cfg.pendulum)
        trials = []
        s = cfg.scenario
        for i, x0 in enumerate(data.test_starts):
            for r in range(s.reps):
                xs, ys = pend.rollout(x0, s.horizon, trial_rng(seed, i, r))
                trials.append({"trial": i * s.reps + r, "truth": xs.tolist(), "measurements": [None] + ys[1:].tolist()})
        write_replay_csv(trials, out / f"test_seed{seed}.csv")
    print(f"wrote datasets to {out}")
    return 0


def cmd_run(cfg: ExperimentConfig, theorem2: bool) -> int:
    out = Path(cfg.out)
    status = 0
    if theorem2:
        for seed in cfg.seeds:
            dev = theorem2_check(build_context(cfg, seed))
            ok = all(v <= THEOREM2_TOL for v in dev.values())
            print(f"theorem2 seed={seed} " + " ".join(f"{k}={v:.3e}" for k, v in dev.items()) + (" PASS" if ok else " FAIL"))
            status = status or (0 if ok else 1)
    archive = run_experiment(cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "archive.json", "w") as fh:
        json.dump(archive, fh)
    write_replay_csv(archive["trials"], out / "measurements.csv")
    metrics = archive_metrics(archive)
    emit_report(metrics, out, archive=archive)
    _print_table(metrics)
    print(f"archive hash {archive['hash']}")
    bad = n_failed(archive)
    if bad:
        print(f"{bad} trial(s) failed; see archive.json", file=sys.stderr)
        status = 1
    return status


def cmd_replay(cfg: ExperimentConfig, path: Path) -> int:
    res = replay_offline(path, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "replay.json", "w") as fh:
        json.dump(res, fh)
    metrics = [MetricsRow.from_dict(m) for m in res["metrics"]]
    emit_report(metrics, out, archive=res)
    _print_table(metrics)
    return 1 if n_failed(res) else 0


def cmd_report(path: Path, out: Path | None) -> int:
    try:
        with open(path) as fh:
            archive = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read archive {path}: {e}") from None
    if "schema_version" not in archive or "trials" not in archive:
        raise ConfigError(f"{path} is not a results archive")
    metrics = compute_metrics(archive["trials"], archive["config"]["scenario"]["variant"])
    emit_report(metrics, out or path.parent, archive=archive)
    _print_table(metrics)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.archive, args.out)
        cfg = _config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.theorem2_check)
        return cmd_replay(cfg, args.csv)
    except (ConfigError, ReplaySchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
