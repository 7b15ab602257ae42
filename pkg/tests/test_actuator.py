import math

import numpy as np
import pytest

from r2rac.actuator import (CONTACT, J_UNCONTROLLED, NO_CONTACT, NO_CONTACT_PENALTY, ActuatorState,
                            ConstantDrive, DomainError, SaturationError, SimOptions, dynamics,
                            integrate, reluctance, reluctance_dz, simulate_switch)
from r2rac.feedforward import ControllerParams, Feedforward
from r2rac.params import NOMINAL

from oracles import J_UNC, RELUCTANCE_1MM, RELUCTANCE_DZ_1MM

P = NOMINAL


# --- reluctance -------------------------------------------------------------

def test_reluctance_closed_gap():
    assert reluctance(0.0, 0.0) == pytest.approx(5.23, abs=1e-14)
    assert reluctance(0.0, P.lambda_sat / 2) == pytest.approx(6.58, abs=1e-14)


def test_reluctance_open_gap():
    assert reluctance(1e-3, 0.0) == pytest.approx(RELUCTANCE_1MM, rel=1e-13)
    assert reluctance(1e-3, 0.0) == pytest.approx(24.39, abs=5e-3)


def test_reluctance_errors():
    with pytest.raises(SaturationError):
        reluctance(1e-4, P.lambda_sat)
    with pytest.raises(SaturationError):
        reluctance(1e-4, -1.01 * P.lambda_sat)
    with pytest.raises(DomainError):
        reluctance(-1e-6, 0.0)
    with pytest.raises(DomainError):
        reluctance_dz(-1e-6)


def test_reluctance_dz_values():
    assert reluctance_dz(0.0) == P.k4
    assert reluctance_dz(1e-3) == pytest.approx(RELUCTANCE_DZ_1MM, rel=1e-12)
    h = 1e-9
    fd = (reluctance(1e-3 + h, 0.0) - reluctance(1e-3 - h, 0.0)) / (2 * h)
    assert reluctance_dz(1e-3) == pytest.approx(fd, rel=1e-6)


def test_reluctance_dz_matches_fd_random(rng):
    z = rng.uniform(1e-5, P.z0, 100)
    lam = rng.uniform(-0.9, 0.9, 100) * P.lambda_sat
    h = 1e-9
    fd = (reluctance(z + h, lam) - reluctance(z - h, lam)) / (2 * h)
    assert np.allclose(reluctance_dz(z), fd, rtol=1e-6, atol=0)


def test_reluctance_monotone_in_flux(rng):
    z = rng.uniform(0, P.z0, 50)
    lam = np.sort(rng.uniform(0, 0.99 * P.lambda_sat, (50, 20)), axis=1)
    vals = reluctance(z[:, None], lam)
    assert np.all(np.diff(vals, axis=1) > 0)
    assert np.allclose(reluctance(z[:, None], -lam), vals)


# --- dynamics ---------------------------------------------------------------

def test_equilibrium():
    # zs lies outside the stroke, so evaluate the unclamped formula directly at z = zs
    p = NOMINAL.__class__(z0=0.02)
    assert dynamics(ActuatorState(p.zs, 0.0, 0.0), 0.0, p) == (0.0, 0.0, 0.0)


def test_open_limit_clamp():
    assert dynamics(ActuatorState(P.z0, 0.0, 0.0), 0.0) == (0.0, 0.0, 0.0)


def test_dynamics_formula_and_integration_oracle():
    s = ActuatorState(5e-4, 0.0, 0.01)
    dz, dv, dlam = dynamics(s, 10.0)
    force = -P.ks * (s.z - P.zs) - 0.5 * s.lam**2 * reluctance_dz(s.z)
    assert dv == pytest.approx(force / P.m, rel=1e-14)
    assert dlam == pytest.approx(10.0 - P.R * s.lam * reluctance(s.z, s.lam), rel=1e-14)
    # finite difference of a very fine one-step integration
    h = 1e-9
    st = integrate(P.as_array(), s.z, s.v, s.lam, 0.0, h, np.full(3, 10.0), 1, False, 0)
    z1, v1, l1 = st[3], st[4], st[5]
    assert (v1 - s.v) / h == pytest.approx(dv, rel=1e-6)
    assert (l1 - s.lam) / h == pytest.approx(dlam, rel=1e-6)


def test_dynamics_saturation():
    with pytest.raises(SaturationError):
        dynamics(ActuatorState(5e-4, 0.0, P.lambda_sat), 0.0)


# --- integrator -------------------------------------------------------------

def _free_run(dt, T=2e-4):
    n = int(round(T / dt))
    out = integrate(P.as_array(), 5e-4, -0.1, 8e-3, 0.0, dt, np.full(2 * n + 1, 5.0), n, False, 0)
    assert out[0] == NO_CONTACT
    return np.array(out[3:6])


def test_fourth_order_convergence():
    ref = _free_run(1e-8)
    scale = np.array([1e-3, 1.0, 1e-2])
    e1 = np.max(np.abs(_free_run(4e-6) - ref) / scale)
    e2 = np.max(np.abs(_free_run(2e-6) - ref) / scale)
    assert 12 < e1 / e2 < 20


def test_energy_conservation():
    dt, n = 1e-6, 1000
    out = integrate(P.as_array(), 5e-4, 0.0, 0.0, 0.0, dt, np.zeros(2 * n + 1), n, False, 1)
    tr = out[6]
    z, v = tr[:, 1], tr[:, 2]
    assert np.all((z >= P.zf) & (z <= P.z0))
    E = 0.5 * P.m * v**2 + 0.5 * P.ks * (z - P.zs) ** 2
    assert np.max(np.abs(E - E[0])) / E[0] < 1e-12


# --- simulate_switch --------------------------------------------------------

def _ff_opts(theta, **kw):
    ff = Feedforward(theta)
    return ff, SimOptions(initial_lambda=ff.lambda_ref(P.t0)[0], **kw)


def test_soft_landing(theta_nom):
    ff, opts = _ff_opts(theta_nom)
    out = simulate_switch(P, ff, opts)
    assert out.contact and out.J <= 1e-3
    assert out.t_c == pytest.approx(P.tf, abs=2e-6)
    assert out.J == abs(out.v_c)


def test_no_drive_no_contact():
    out = simulate_switch(P, ConstantDrive(0.0))
    assert not out.contact and out.J == NO_CONTACT_PENALTY and out.status == "no_contact"
    assert NO_CONTACT_PENALTY == 2 * J_UNCONTROLLED


def test_uncontrolled_cost():
    out = simulate_switch(P, ConstantDrive(30.0), dt=1e-7)
    assert out.contact and out.v_c < 0
    assert out.J == pytest.approx(J_UNC, abs=5e-7)
    assert J_UNCONTROLLED == J_UNC
    coarse = simulate_switch(P, ConstantDrive(30.0))
    assert coarse.J == pytest.approx(J_UNC, rel=1e-5)
    assert P.t0 <= coarse.t_c <= 3 * P.tf


def test_saturation_abort():
    out = simulate_switch(P, ConstantDrive(500.0))
    assert not out.contact and out.status == "saturated" and out.J == NO_CONTACT_PENALTY


def test_event_determinism():
    a = simulate_switch(P, ConstantDrive(30.0))
    b = simulate_switch(P, ConstantDrive(30.0))
    assert a == b


def test_contact_refinement_not_grid_quantized():
    # the refined contact time moves continuously with the drive level
    t = [simulate_switch(P, ConstantDrive(V)).t_c for V in (30.0, 30.001)]
    assert t[0] != t[1] and abs(t[0] - t[1]) < 1e-6
    assert (t[0] / 1e-6) % 1 != 0


def test_hold_after_tf(theta_nom):
    # a slightly stronger spring spoils the landing; the held input still has a defined outcome
    p_true = P.with_uncertain(P.uncertain * np.r_[1.02, np.ones(8)])
    ff, opts = _ff_opts(theta_nom)
    out = simulate_switch(p_true, ff, opts)
    assert out.J > 1e-3
    forced = simulate_switch(p_true, ff, SimOptions(initial_lambda=opts.initial_lambda, post_tf_voltage=30.0))
    assert forced.contact and forced.t_c > P.tf


def test_trace(theta_nom):
    ff, opts = _ff_opts(theta_nom, record_every=50)
    out = simulate_switch(P, ff, opts)
    tr = out.trace
    assert set(tr) == {"t", "z", "v", "lambda", "u"}
    assert tr["t"][0] == 0.0 and tr["z"][-1] == pytest.approx(P.zf, abs=1e-12)
    assert np.all(np.abs(tr["lambda"]) < P.lambda_sat)


def test_invalid_options():
    with pytest.raises(ValueError):
        simulate_switch(P, ConstantDrive(30.0), dt=0.0)
    with pytest.raises(ValueError):
        simulate_switch(P, ConstantDrive(30.0), T_max=P.tf / 2)
