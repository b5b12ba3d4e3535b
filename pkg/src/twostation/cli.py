"""Command-line entry point: ``twostation {simulate,estimate,replicate,throughput}``.

Exit codes: 0 success, 2 bad config or input data, 3 I/O failure,
4 estimation did not converge (the result file is still written).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import experiments
from .estimator import EstimatorOptions, estimate
from .io import (
    ConfigError,
    ObservationFormatError,
    RunConfig,
    dump_json,
    estimate_dict,
    load_config,
    read_observations_csv,
    summary_dict,
    write_observations_csv,
)
from .simulator import simulate_run
from .values import ParetoValue

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NOT_CONVERGED = 0, 2, 3, 4
FULL_SCALE_RUNS = 1000


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = Path(args.out if args.out is not None else (cfg.output_dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "k", None) is not None:
        changes["k_target"] = args.k
    if getattr(args, "runs", None) is not None:
        changes["n_runs"] = args.runs
    if getattr(args, "full_scale", False):
        changes["n_runs"] = FULL_SCALE_RUNS
    if getattr(args, "starts", None) is not None:
        changes["estimator"] = dataclasses.replace(cfg.estimator, n_starts=args.starts)
    return dataclasses.replace(cfg, **changes)


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    run = simulate_run(cfg.params, cfg.service1, cfg.service2, cfg.k_target, seed=cfg.seed)
    out = _out_dir(args, cfg)
    write_observations_csv(run.observations, out / "obs.csv")
    dump_json(summary_dict(run, cfg.params), out / "summary.json")
    return EXIT_OK


def cmd_estimate(args) -> int:
    obs = read_observations_csv(args.obs)
    opts = EstimatorOptions()
    if args.starts is not None:
        opts = dataclasses.replace(opts, n_starts=args.starts)
    if args.seed is not None:
        opts = dataclasses.replace(opts, seed=args.seed)
    res = estimate(obs, opts)
    out = _out_dir(args)
    dump_json(estimate_dict(res), out / "estimate.json")
    if not res.converged:
        print(f"estimate: not converged ({res.message})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_replicate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(args, cfg)
    row, records = experiments.replicate(
        cfg.params, cfg.service1, cfg.service2, cfg.k_target, cfg.n_runs, cfg.seed, cfg.estimator, jobs=args.jobs
    )
    experiments.write_table([row], out / "table.csv")
    experiments.histogram_report(records, out)
    return EXIT_OK


def cmd_throughput(args) -> int:
    sweep = experiments.throughput_sweep(
        args.lambda_total, args.step, ParetoValue(args.theta), args.c, args.k, args.runs,
        args.seed, jobs=args.jobs,
    )
    out = _out_dir(args)
    sweep.write(out)
    dump_json({"crossover_lambda1": sweep.crossover}, out / "sweep.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twostation", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one run and write obs.csv + summary.json")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit the model to an observation CSV")
    p.add_argument("obs", help="CSV with header k,a,i,x")
    p.add_argument("--out")
    p.add_argument("--starts", type=int)
    p.add_argument("--seed", type=int, help="seed for dispersing the starting points")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("replicate", help="simulate and fit many runs; write table and histograms")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE_RUNS} runs")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("throughput", help="throughput of the two server allocations over lambda1")
    p.add_argument("--lambda-total", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--theta", type=float, default=4.0)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_throughput)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ObservationFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
