import gzip
import json
import math

import numpy as np
import pytest

from r2rac.config import ConfigError, DEFAULTS, apply_override, load_config
from r2rac.harness import (calibrate_jstar, make_optimizer, moving_average, percentile_series,
                           perturb_params, read_trials, run_monte_carlo, run_trial, trial_plant,
                           trial_rng, uncontrolled_cost, write_results)
from r2rac.params import NOMINAL, UNCERTAIN
from r2rac.adapt import AdaptiveCoordinates, PatternSearch

from oracles import J_UNC


def cfg(**over):
    return load_config(overrides=[f"{k}={json.dumps(v)}" for k, v in over.items()], env={})


# --- perturbation -------------------------------------------------------------

def test_zero_fraction_is_nominal(rng):
    assert perturb_params(NOMINAL, 0.0, rng) == NOMINAL


def test_perturbation_bounds():
    rng = np.random.default_rng(7)
    ks = np.array([perturb_params(NOMINAL, 0.05, rng).ks for _ in range(10_000)])
    assert ks.min() >= 52.25 and ks.max() <= 57.75
    assert ks.min() < 52.5 and ks.max() > 57.5


def test_fixed_parameters_untouched(rng):
    p = perturb_params(NOMINAL, 0.25, rng)
    assert (p.R, p.z0, p.zf, p.t0, p.tf) == (NOMINAL.R, NOMINAL.z0, NOMINAL.zf, NOMINAL.t0, NOMINAL.tf)
    ratio = p.uncertain / NOMINAL.uncertain
    assert np.all((ratio >= 0.75) & (ratio <= 1.25)) and len(set(ratio)) == len(UNCERTAIN)


def test_seeded_determinism():
    a = perturb_params(NOMINAL, 0.05, trial_rng(1, 3))
    b = perturb_params(NOMINAL, 0.05, trial_rng(1, 3))
    c = perturb_params(NOMINAL, 0.05, trial_rng(1, 4))
    assert a == b and a != c


def test_common_test_sets():
    plants = {s: [trial_plant(cfg(strategy=s), i) for i in range(20)] for s in ("PS+", "DF", "GB", "Hybrid")}
    assert plants["PS+"] == plants["DF"] == plants["GB"] == plants["Hybrid"]


def test_invalid_fraction(rng):
    with pytest.raises(ValueError):
        perturb_params(NOMINAL, 1.0, rng)


# --- trials -------------------------------------------------------------------

@pytest.mark.parametrize("strategy", ["PS+", "DF", "GB", "Hybrid"])
def test_nominal_first_operation(strategy):
    costs = run_trial(cfg(strategy=strategy, n_ops=3), NOMINAL)
    assert costs.shape == (3,) and costs[0] <= 1e-3


def test_single_operation_budget():
    costs = run_trial(cfg(n_ops=1), NOMINAL)
    assert costs.shape == (1,) and costs[0] <= 1e-3


def test_trial_series_and_running_min():
    c = cfg(strategy="DF", n_ops=40, perturbation=0.05)
    costs, opt = run_trial(c, trial_plant(c, 0), return_optimizer=True)
    assert costs.shape == (40,) and np.all(np.isfinite(costs))
    run_min = np.minimum.accumulate(costs)
    assert np.all(np.diff(run_min) <= 0)
    assert opt.J_best == pytest.approx(run_min[-1])
    assert [r["J"] for r in opt.trace] == list(costs)


def test_make_optimizer_kinds():
    assert isinstance(make_optimizer(cfg(strategy="PS+")), PatternSearch)
    opt = make_optimizer(cfg(strategy="GB"))
    assert isinstance(opt, AdaptiveCoordinates) and opt.step.alpha_con == 0.7
    assert make_optimizer(cfg(strategy="PS+")).step.alpha_exp == 2.0


# --- statistics ---------------------------------------------------------------

def test_percentile_definitions():
    p = percentile_series(np.array([[1.0], [2.0], [3.0]]))
    assert p["P50"][0] == 2.0
    p = percentile_series(np.array([[0.0], [10.0]]))
    assert p["P10"][0] == pytest.approx(1.0) and p["P97.5"][0] == pytest.approx(9.75)


def test_degenerate_distribution():
    r = run_monte_carlo(cfg(perturbation=0.0, n_trials=3, n_ops=4, strategy="DF"))
    p = r.percentiles
    assert np.array_equal(p["P10"], p["P50"]) and np.array_equal(p["P50"], p["P90"])


def test_percentile_ordering(rng):
    p = percentile_series(rng.exponential(size=(50, 30)))
    assert np.all(p["P10"] <= p["P50"]) and np.all(p["P50"] <= p["P90"]) and np.all(p["P90"] <= p["P97.5"])


# --- persistence and reproducibility --------------------------------------------

def _campaign(tmp_path, name, jobs=1, **over):
    c = cfg(n_trials=3, n_ops=5, perturbation=0.05, **over)
    r = run_monte_carlo(c, jobs=jobs)
    return r, write_results(r, tmp_path / name, dump_plants=True)


def test_artifacts(tmp_path):
    r, paths = _campaign(tmp_path, "a")
    doc = json.loads(paths["percentiles"].read_text())
    assert doc["config"] == r.config and doc["n_ops"] == 5 and len(doc["P90"]) == 5
    with gzip.open(paths["trials"], "rt") as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# config: ") and json.loads(lines[0][10:]) == r.config
    assert lines[1] == "trial,op,J" and len(lines) == 2 + 15
    assert np.array_equal(read_trials(paths["trials"]), r.costs)


def test_byte_identical_rerun(tmp_path):
    _, a = _campaign(tmp_path, "a")
    _, b = _campaign(tmp_path, "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()


def test_parallel_invariance(tmp_path):
    _, a = _campaign(tmp_path, "serial", jobs=1)
    _, b = _campaign(tmp_path, "pool", jobs=2)
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()


def test_plants_shared_across_strategies(tmp_path):
    _, a = _campaign(tmp_path, "df", strategy="DF")
    _, b = _campaign(tmp_path, "hy", strategy="Hybrid")
    assert a["plants"].read_bytes() == b["plants"].read_bytes()


# --- J* calibration -------------------------------------------------------------

def test_calibration_fixed_point():
    sched = calibrate_jstar(np.full(300, 0.4), 0.4)
    assert sched.shape == (300,) and np.allclose(sched, 0.4)


def test_calibration_first_entry():
    sched = calibrate_jstar(np.linspace(3.0, 0.1, 50), J_UNC)
    assert sched[0] == J_UNC and sched.shape == (50,)


def test_moving_average_edges():
    x = np.arange(10.0)
    assert np.allclose(moving_average(x, 3), [0.5, 1, 2, 3, 4, 5, 6, 7, 8, 8.5])


def test_uncontrolled_cost():
    assert uncontrolled_cost(cfg()) == pytest.approx(J_UNC, rel=1e-5)


# --- configuration --------------------------------------------------------------

def test_defaults_match_tables():
    assert DEFAULTS["hyper"]["PS+"] == {"s": 0.2, "s_min": 2e-10, "s_max": 2.0, "alpha_con": 0.5, "alpha_exp": 2.0}
    ac = DEFAULTS["hyper"]["AC"]
    assert (ac["s"], ac["alpha_con"], ac["alpha_exp"], ac["beta"]) == (0.2, 0.7, 1.1, 0.8)
    assert DEFAULTS["n_trials"] == 200 and DEFAULTS["n_ops"] == 300 and DEFAULTS["gamma"] == 0.9


def test_overrides_and_env(tmp_path):
    c = load_config(overrides=["hyper.AC.beta=0.5", "strategy=DF"], env={"R2R_SEED": "99"})
    assert c["hyper"]["AC"]["beta"] == 0.5 and c["strategy"] == "DF" and c["seed"] == 99
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"n_ops": 7, "sim": {"dt": 5e-7}}))
    c = load_config(f, env={})
    assert c["n_ops"] == 7 and c["sim"]["dt"] == 5e-7 and c["sim"]["hold_after_tf"] is True


@pytest.mark.parametrize("bad", [["nope=1"], ["sim.nope=1"], ["strategy"], ["n_ops=0"],
                                 ["strategy=CMA"], ["perturbation=1.5"], ["jstar.kind=weird"]])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        load_config(overrides=bad, env={})


def test_config_file_errors(tmp_path):
    f = tmp_path / "c.json"
    f.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(f, env={})
    f.write_text("{bad json")
    with pytest.raises(ConfigError):
        load_config(f, env={})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json", env={})
