"""Command line entry point: run, sweep, converge, fit-models."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentSpec, SimConfig, load_config
from .encounter import BLUETOOTH, WIFI, dump_model, write_calibration
from .experiments import (ConvergenceSetup, convergence_experiment, emit_outputs, emit_run,
                          run_sweep, sweep_table)
from .metrics import summarize
from .sim import generate_environment, run_simulation
from .sim.radio import calibrate, calibration_samples
from .sim.runner import rng_streams

EXIT_OK, EXIT_RUN_FAILURE, EXIT_CONFIG = 0, 1, 2


def _load(args, want_spec: bool = False):
    overrides = {"seed": args.seed} if args.seed is not None else None
    if args.config:
        loaded = load_config(args.config, overrides)
    else:
        loaded = SimConfig(**(overrides or {}))
    if want_spec and isinstance(loaded, SimConfig):
        return ExperimentSpec(base=loaded)
    if not want_spec and isinstance(loaded, ExperimentSpec):
        return loaded.base
    return loaded


def cmd_run(args) -> int:
    cfg = _load(args)
    res = run_simulation(cfg)
    summary = summarize(res)
    if args.out:
        emit_run(res, args.out, summary)
    print(summary.to_text(), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _load(args, want_spec=True)
    out = Path(args.out or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "sweep.csv"
    rows = []

    def emit(row):
        rows.append(row)
        table.write_text(sweep_table(rows))
        status = f"p50={row.summary.p50:.3f}" if row.ok else f"FAILED {row.error}"
        print(f"{spec.param}={row.value} seed={row.seed} {status}", flush=True)

    result_rows = run_sweep(spec, on_row=emit, jobs=args.jobs, keep_results=args.logs)
    emit_outputs(result_rows, out)
    return EXIT_OK if all(r.ok for r in result_rows) else EXIT_RUN_FAILURE


def cmd_converge(args) -> int:
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.trials:
        kwargs["trials"] = args.trials
    if args.steps:
        kwargs["loop_steps"] = args.steps
    report = convergence_experiment(ConvergenceSetup(**kwargs))
    if args.out:
        emit_outputs(report, args.out)
    for k, v in report.to_dict().items():
        print(f"{k}={v}")
    ok = report.rel_deviation <= 0.05 and report.non_divergent and report.improvement >= 5
    print("checks:", "pass" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def cmd_fit_models(args) -> int:
    cfg = _load(args)
    streams = rng_streams(cfg.seed, cfg.n_agents)
    env = generate_environment(cfg, streams["env"])
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for kind in (BLUETOOTH, WIFI):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(7)[6])
        cal = calibrate(cfg, env, rng, kind)
        print(f"{kind}: {cal.model} r_var={cal.r_var:.4f} train={cal.n_train} test={cal.n_test}")
        if out:
            data = calibration_samples(cfg, env, np.random.default_rng(cfg.seed), kind)
            write_calibration(out / f"{kind}_calibration.csv", data)
            (out / f"{kind}_model.txt").write_text(dump_model(cal.model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchorslam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("run", help="simulate one configuration")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run an experiment sweep over paired seeds")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--logs", action="store_true", help="also write every run's event log")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("converge", help="single-update contraction and single-particle loop study")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_converge)
    p = sub.add_parser("fit-models", help="calibrate both encounter distance models")
    common(p)
    p.set_defaults(func=cmd_fit_models)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
