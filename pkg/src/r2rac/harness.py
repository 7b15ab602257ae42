"""Monte Carlo campaigns over perturbed plants."""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .actuator import SimOptions, simulate_switch
from .adapt import AdaptiveCoordinates, PatternSearch
from .config import DEFAULTS
from .feedforward import ControllerParams, Feedforward, InfeasibleTrajectory, fisher
from .params import NOMINAL, UNCERTAIN, ParameterError, PhysicalParams
from .stepsize import (ConstantTarget, ExponentialTarget, ScaledMinimum, StepSizeState,
                       Strategy, TabulatedTarget)

PERCENTILES = (10.0, 50.0, 90.0, 97.5)
PERCENTILE_KEYS = ("P10", "P50", "P90", "P97.5")


def perturb_params(p_nom: PhysicalParams, fraction: float, rng: np.random.Generator) -> PhysicalParams:
    """Scale each uncertain parameter by an independent U[1-f, 1+f] factor."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    factors = rng.uniform(1.0 - fraction, 1.0 + fraction, size=len(UNCERTAIN))
    if fraction == 0:
        return p_nom
    return p_nom.with_uncertain(p_nom.uncertain * factors)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def nominal_params(cfg: dict) -> PhysicalParams:
    return NOMINAL if cfg.get("params") is None else PhysicalParams.from_dict(cfg["params"])


def trial_plant(cfg: dict, trial: int) -> PhysicalParams:
    """True plant of one trial; depends only on (seed, trial), never on strategy."""
    return perturb_params(nominal_params(cfg), float(cfg["perturbation"]), trial_rng(cfg["seed"], trial))


def sim_options(cfg: dict) -> SimOptions:
    sim = cfg["sim"]
    return SimOptions(dt=float(sim["dt"]), T_max=sim["T_max"], hold_after_tf=bool(sim["hold_after_tf"]),
                      post_tf_voltage=sim.get("post_tf_voltage"),
                      no_contact_penalty=float(sim["no_contact_penalty"]))


def evaluate(theta: Optional[ControllerParams], p_true: PhysicalParams, opts: SimOptions) -> float:
    """Cost of one switching operation under the feedforward law for ``theta``.

    Every failure (non-positive parameters, infeasible reference) costs the
    no-contact penalty.
    """
    if theta is None:
        return opts.no_contact_penalty
    try:
        ff = Feedforward(theta)
    except (InfeasibleTrajectory, ParameterError):
        return opts.no_contact_penalty
    lam0 = ff.lambda_ref(p_true.t0)[0]
    run = replace(opts, initial_lambda=lam0)
    return simulate_switch(p_true, ff, run).J


def jstar_schedule(cfg: dict):
    js = cfg["jstar"]
    if js["kind"] == "exponential":
        return ExponentialTarget(float(js["start"]), float(js["tau"]), float(js["floor"]))
    if js["kind"] == "table":
        if not js.get("path"):
            raise ValueError("jstar.kind=table needs jstar.path")
        return TabulatedTarget.from_csv(js["path"])
    value = js.get("value")
    return ConstantTarget(math.inf if value is None else float(value))


@lru_cache(maxsize=8)
def _initial_basis(nominal_json: str):
    return fisher(ControllerParams.nominal(PhysicalParams.from_json(nominal_json)))


def make_optimizer(cfg: dict):
    p_nom = nominal_params(cfg)
    theta_nom = ControllerParams.nominal(p_nom)
    basis = _initial_basis(p_nom.to_json())
    strategy = Strategy.parse(cfg["strategy"])
    if strategy is Strategy.PS:
        return PatternSearch(theta_nom, StepSizeState(**cfg["hyper"]["PS+"]), basis, int(cfg["ps_dims"]))
    step = StepSizeState(**cfg["hyper"]["AC"])
    if strategy is Strategy.GB:
        target = ScaledMinimum(float(cfg["gamma"]))
    elif strategy is Strategy.HYBRID:
        target = jstar_schedule(cfg)
    else:
        target = None
    censor = float(cfg["sim"]["no_contact_penalty"]) if cfg.get("censor_penalty") else math.inf
    return AdaptiveCoordinates(theta_nom, strategy, step, target, basis, censor=censor,
                                seed_slope=bool(cfg.get("seed_slope")))


def run_trial(cfg: dict, p_true: PhysicalParams, return_optimizer: bool = False):
    """Cost of each of the ``n_ops`` executed operations of one trial."""
    opt = make_optimizer(cfg)
    opts = sim_options(cfg)
    costs = np.empty(int(cfg["n_ops"]))
    for k in range(costs.size):
        prop = opt.ask()
        costs[k] = evaluate(prop.theta, p_true, opts)
        opt.tell(costs[k])
    return (costs, opt) if return_optimizer else costs


def _trial_job(args):
    cfg, trial = args
    return run_trial(cfg, trial_plant(cfg, trial))


def percentile_series(costs: np.ndarray) -> dict:
    values = np.percentile(np.asarray(costs, dtype=float), PERCENTILES, axis=0)
    return {k: v for k, v in zip(PERCENTILE_KEYS, values)}


@dataclass
class MonteCarloResult:
    config: dict
    costs: np.ndarray  # (n_trials, n_ops)
    plants: list

    @property
    def percentiles(self) -> dict:
        return percentile_series(self.costs)


def run_monte_carlo(cfg: dict, n_trials: Optional[int] = None, jobs: Optional[int] = None,
                    progress=None) -> MonteCarloResult:
    n_trials = int(cfg["n_trials"] if n_trials is None else n_trials)
    jobs = cfg.get("jobs") if jobs is None else jobs
    tasks = [(cfg, i) for i in range(n_trials)]
    rows = []
    if jobs is None or int(jobs) <= 1:
        for task in tasks:
            rows.append(_trial_job(task))
            if progress:
                progress(len(rows), n_trials)
    else:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            for row in pool.map(_trial_job, tasks, chunksize=max(1, n_trials // (4 * int(jobs)))):
                rows.append(row)
                if progress:
                    progress(len(rows), n_trials)
    plants = [trial_plant(cfg, i) for i in range(n_trials)]
    return MonteCarloResult(cfg, np.vstack(rows), plants)


def _gzip_bytes(text: str) -> bytes:
    buf = io.BytesIO()
    # fixed mtime and no filename keep the archive byte-reproducible
    with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
        gz.write(text.encode())
    return buf.getvalue()


def write_results(result: MonteCarloResult, outdir, dump_plants: bool = False) -> dict:
    """Write ``percentiles.json`` and ``trials.csv.gz`` (plus ``plants.csv``)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    pct = result.percentiles
    doc = {"config": result.config, "n_trials": int(result.costs.shape[0]),
           "n_ops": int(result.costs.shape[1]), "J_uncontrolled": uncontrolled_cost(result.config)}
    doc.update({k: [float(x) for x in v] for k, v in pct.items()})
    (out / "percentiles.json").write_text(json.dumps(doc, indent=1) + "\n")
    text = io.StringIO()
    text.write("# config: " + json.dumps(result.config, sort_keys=True) + "\n")
    w = csv.writer(text, lineterminator="\n")
    w.writerow(["trial", "op", "J"])
    for i, row in enumerate(result.costs):
        for k, J in enumerate(row, start=1):
            w.writerow([i, k, repr(float(J))])
    (out / "trials.csv.gz").write_bytes(_gzip_bytes(text.getvalue()))
    paths = {"percentiles": out / "percentiles.json", "trials": out / "trials.csv.gz"}
    if dump_plants:
        with open(out / "plants.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", *UNCERTAIN])
            for i, p in enumerate(result.plants):
                w.writerow([i, *(repr(float(x)) for x in p.uncertain)])
        paths["plants"] = out / "plants.csv"
    return paths


def read_trials(path) -> np.ndarray:
    with gzip.open(path, "rt") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    n_trials = max(int(r["trial"]) for r in rows) + 1
    n_ops = max(int(r["op"]) for r in rows)
    costs = np.empty((n_trials, n_ops))
    for r in rows:
        costs[int(r["trial"]), int(r["op"]) - 1] = float(r["J"])
    return costs


def uncontrolled_cost(cfg: dict = DEFAULTS, voltage: float = 30.0) -> float:
    from .actuator import ConstantDrive

    opts = sim_options(cfg)
    return simulate_switch(nominal_params(cfg), ConstantDrive(voltage), opts).J


def moving_average(x, window: int = 11) -> np.ndarray:
    """Centered moving average with a window that shrinks at the edges."""
    x = np.asarray(x, dtype=float)
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    lo = np.clip(np.arange(x.size) - half, 0, x.size)
    hi = np.clip(np.arange(x.size) + half + 1, 0, x.size)
    return (c[hi] - c[lo]) / (hi - lo)


def calibrate_jstar(p90, J_unc: float, window: int = 11) -> np.ndarray:
    """Hybrid J* table: smoothed P90 of a DF campaign, starting at J_unc."""
    sched = moving_average(p90, window)
    sched[0] = J_unc
    return sched
