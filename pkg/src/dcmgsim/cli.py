"""Command-line front end.

Subcommands:

* ``run``      -- time-domain simulation; writes ``traces.csv`` and
  ``metrics.json`` to the output directory.
* ``sweep``    -- AC sweep; writes one ``bode_<tf>.csv`` per transfer
  function plus ``sweep_meta.json``.
* ``validate`` -- parse + validate only; prints the fully resolved
  parameter set as TOML.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import engine, measure
from .config import (
    PRESETS,
    build_scenario,
    build_sweep_config,
    emit_toml,
    load_toml,
    resolve,
)
from .errors import ConfigError, SimulationError
from .sweep import TransferFunctionId, run_sweeps

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcmgsim",
        description="DC microgrid simulator with hybrid voltage/current "
                    "harmonic-compensation control")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="TOML config file")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="use a built-in parameter set instead of a file")
        p.add_argument("--duration", type=float, default=None,
                       help="override [solver].duration (seconds)")

    p_run = sub.add_parser("run", help="time-domain simulation")
    common(p_run)
    p_run.add_argument("-o", "--output", default=".", help="output directory")

    p_sweep = sub.add_parser("sweep", help="AC sweep of closed-loop transfer functions")
    common(p_sweep)
    p_sweep.add_argument("-o", "--output", default=".", help="output directory")
    p_sweep.add_argument("--tf", default="gii,gvi,gvv,giv",
                         help="comma list from {gii,gvi,gvv,giv}")
    p_sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                         help="parallel workers for sweep frequencies")

    p_val = sub.add_parser("validate", help="validate config and print the resolved parameters")
    common(p_val)
    return parser


def _load_config(args) -> dict:
    if args.preset and args.config:
        raise ConfigError("cli", "give either a config file or --preset, not both")
    if args.preset:
        raw = {"preset": args.preset}
    elif args.config:
        raw = load_toml(args.config)
    else:
        raise ConfigError("cli", "a config file or --preset is required")
    overrides = {}
    if args.duration is not None:
        overrides["solver.duration"] = args.duration
    cfg = resolve(raw, overrides)
    if args.duration is not None:
        # a duration override truncates the timeline
        cfg["event"] = [ev for ev in cfg["event"] if ev["time"] <= args.duration]
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    scenario = build_scenario(cfg)
    os.makedirs(args.output, exist_ok=True)
    traces = engine.run(scenario)
    traces.to_csv(os.path.join(args.output, "traces.csv"))
    event_times = tuple(ev["time"] for ev in cfg["event"])
    harmonic_freq = cfg.get("harmonic_load", {}).get("f_h", 100.0)
    metrics = measure.scenario_metrics(traces, scenario.network,
                                       event_times=event_times,
                                       harmonic_freq=harmonic_freq)
    with open(os.path.join(args.output, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    names = [t.strip().lower() for t in args.tf.split(",") if t.strip()]
    try:
        tfs = [TransferFunctionId(name) for name in names]
    except ValueError:
        known = ", ".join(t.value for t in TransferFunctionId)
        raise ConfigError("--tf", f"unknown transfer function in {names!r}; expected subset of {known}")
    if not tfs:
        raise ConfigError("--tf", "no transfer functions requested")
    scenario = build_scenario(cfg)
    sweep_cfg = build_sweep_config(cfg)
    try:
        sweep_cfg.validate(scenario.dt)
    except ValueError as exc:
        raise ConfigError("[sweep]", str(exc)) from exc
    os.makedirs(args.output, exist_ok=True)
    curves, meta = run_sweeps(scenario.network, scenario.controllers, tfs,
                              sweep_cfg, dt=scenario.dt, jobs=args.jobs,
                              collect_errors=True)
    for tf, curve in curves.items():
        curve.to_csv(os.path.join(args.output, f"bode_{tf.value}.csv"))
    meta["transfer_functions"] = [tf.value for tf in tfs]
    meta["jobs"] = args.jobs
    with open(os.path.join(args.output, "sweep_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    build_scenario(cfg)          # full semantic validation
    build_sweep_config(cfg)
    sys.stdout.write(emit_toml(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
