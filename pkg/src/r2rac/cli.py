"""Command-line front end.

::

    r2rac simulate --drive constant:30
    r2rac simulate --drive feedforward --theta nominal --trace run.csv
    r2rac fisher --out basis.json
    r2rac trial --trial 3 strategy=DF
    r2rac montecarlo --out results/df strategy=DF n_trials=200 --jobs 4
    r2rac calibrate-jstar --df results/df --out jstar.csv

Positional ``key=value`` arguments override entries of the JSON config
(dotted paths address nested keys, values are parsed as JSON when possible).
Exit status: 0 on success, 1 on usage or configuration errors, 2 when a run
aborts (core saturation, non-finite state).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .actuator import ConstantDrive, simulate_switch
from .config import ConfigError, load_config
from .feedforward import ControllerParams, Feedforward, InfeasibleTrajectory, fisher
from .harness import (calibrate_jstar, nominal_params, run_monte_carlo, run_trial, sim_options,
                      trial_plant, uncontrolled_cost, write_results)
from .params import ParameterError, PhysicalParams
from .stepsize import TabulatedTarget

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None  # strict JSON has no NaN/inf
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _emit(doc: dict, out) -> None:
    text = json.dumps(_jsonable(doc), indent=1, allow_nan=False) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _theta(spec: str, p_nom: PhysicalParams) -> ControllerParams:
    nominal = ControllerParams.nominal(p_nom)
    if spec == "nominal":
        return nominal
    try:
        values = json.loads(Path(spec).read_text()) if Path(spec).is_file() else json.loads(spec)
    except (json.JSONDecodeError, OSError) as exc:
        raise UsageError(f"--theta must be 'nominal', a JSON list or a JSON file: {exc}") from exc
    if isinstance(values, dict):
        values = values.get("theta")
    try:
        return nominal.replace_theta(np.asarray(values, dtype=float))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --theta: {exc}") from exc


def _plant(args, cfg) -> PhysicalParams:
    if args.plant:
        try:
            return PhysicalParams.from_json(Path(args.plant))
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read plant {args.plant}: {exc}") from exc
    if args.trial is not None:
        return trial_plant(cfg, args.trial)
    return nominal_params(cfg)


def _write_trace(path, trace: dict) -> None:
    keys = list(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*(trace[k] for k in keys)):
            w.writerow([repr(float(x)) for x in row])


def cmd_simulate(args, cfg) -> int:
    p_true = _plant(args, cfg)
    p_nom = nominal_params(cfg)
    opts = sim_options(cfg)
    if args.trace:
        opts = replace(opts, record_every=args.record_every)
    kind, _, arg = args.drive.partition(":")
    if kind == "constant":
        try:
            drive = ConstantDrive(float(arg))
        except ValueError:
            raise UsageError(f"bad drive {args.drive!r}; expected constant:<volts>") from None
    elif kind == "feedforward":
        try:
            drive = Feedforward(_theta(args.theta, p_nom))
        except (InfeasibleTrajectory, ParameterError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ABORT
        opts = replace(opts, initial_lambda=float(drive.lambda_ref(p_true.t0)[0]))
    else:
        raise UsageError(f"unknown drive {args.drive!r}; use constant:<volts> or feedforward")
    out = simulate_switch(p_true, drive, opts)
    if args.trace and out.trace is not None:
        _write_trace(args.trace, out.trace)
    doc = out.to_dict()
    doc["config"] = cfg
    _emit(doc, args.out)
    return EXIT_ABORT if out.status in ("saturated", "nonfinite") else EXIT_OK


def cmd_fisher(args, cfg) -> int:
    theta = _theta(args.theta, nominal_params(cfg))
    try:
        basis = fisher(theta, nodes=args.nodes)
    except (InfeasibleTrajectory, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    doc = basis.to_dict()
    doc["theta_nom"] = theta.theta.tolist()
    doc["config"] = cfg
    _emit(doc, args.out)
    return EXIT_OK


def cmd_trial(args, cfg) -> int:
    p_true = trial_plant(cfg, args.trial)
    costs, opt = run_trial(cfg, p_true, return_optimizer=True)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "phase", "d", "J", "delta", "J_filt", "g_filt", "J_star", "phi", "theta"])
            for r in opt.trace:
                w.writerow([r["k"], r["phase"], r["d"], repr(r["J"]), repr(r["delta"]), repr(r["J_filt"]),
                            repr(r["g_filt"]), repr(r["J_star"]),
                            " ".join(repr(float(x)) for x in r["phi"]),
                            " ".join(repr(float(x)) for x in r["theta"])])
    doc = {"trial": args.trial, "plant": p_true.to_dict(), "costs": costs.tolist(),
           "best_J": float(np.min(costs)), "best_theta": opt.best_theta.tolist(), "config": cfg}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_montecarlo(args, cfg) -> int:
    jobs = args.jobs if args.jobs is not None else cfg.get("jobs")
    if jobs is None:
        jobs = os.cpu_count() or 1

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} trials", end="" if done < total else "\n", file=sys.stderr)

    result = run_monte_carlo(cfg, jobs=int(jobs), progress=progress)
    paths = write_results(result, args.out, dump_plants=args.dump_plants)
    p90 = result.percentiles["P90"]
    print(json.dumps({"out": str(args.out), "final_P90": float(p90[-1]),
                      "files": sorted(str(p) for p in paths.values())}))
    return EXIT_OK


def cmd_calibrate(args, cfg) -> int:
    src = Path(args.percentiles)
    if src.is_dir():
        src = src / "percentiles.json"
    try:
        doc = json.loads(src.read_text())
        p90 = np.asarray(doc["P90"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read DF percentiles {args.percentiles}: {exc}") from exc
    J_unc = uncontrolled_cost(cfg)
    table = TabulatedTarget(calibrate_jstar(p90, J_unc, args.window))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out)
    print(json.dumps({"out": str(args.out), "n_ops": int(table.values.size), "J_unc": J_unc}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="r2rac", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
        return p

    p = common(sub.add_parser("simulate", help="simulate one switching operation"))
    p.add_argument("--drive", default="feedforward", help="constant:<volts> or feedforward")
    p.add_argument("--theta", default="nominal", help="'nominal', a JSON list or a JSON file")
    p.add_argument("--plant", help="JSON file with the true physical parameters")
    p.add_argument("--trial", type=int, help="use the perturbed plant of this trial")
    p.add_argument("--trace", help="write the sampled (t, z, v, lambda, u) series as CSV")
    p.add_argument("--record-every", type=int, default=10, help="trace decimation in steps")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("fisher", help="sensitivity matrix and sorted eigenbasis"))
    p.add_argument("--theta", default="nominal")
    p.add_argument("--nodes", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fisher)

    p = common(sub.add_parser("trial", help="run one adaptation trial"))
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--trace", help="per-evaluation optimizer trace CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trial)

    p = common(sub.add_parser("montecarlo", help="Monte Carlo campaign"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    p.add_argument("--dump-plants", action="store_true", help="also write plants.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_montecarlo)

    p = common(sub.add_parser("calibrate-jstar", help="J* table from a DF campaign"))
    p.add_argument("--df", required=True, dest="percentiles",
                   help="percentiles.json (or its directory) of a DF campaign")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--window", type=int, default=11)
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
