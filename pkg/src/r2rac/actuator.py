"""Reluctance actuator model and switching-operation simulator.

The state is (z, v, lambda): armature position, velocity and coil flux
linkage. A switching operation starts at the open limit ``z0`` and ends at the
first contact with the closed limit ``zf``; the cost is the absolute impact
velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .params import NOMINAL, PhysicalParams

# Frozen regression constant: cost of a 30 V constant activation on the nominal
# plant from zero flux, computed with dt = 1e-7 s (see tests/test_actuator.py).
J_UNCONTROLLED = 1.9774531
NO_CONTACT_PENALTY = 2.0 * J_UNCONTROLLED

SATURATION_MARGIN = 1e-9

# kernel status codes
NO_CONTACT, CONTACT, SATURATED, NONFINITE = 0, 1, 2, 3


class SaturationError(ValueError):
    """Flux linkage at or beyond the saturation value."""


class DomainError(ValueError):
    """Position outside the domain of the reluctance function."""


@dataclass(frozen=True)
class ActuatorState:
    z: float
    v: float
    lam: float
    t: float = 0.0


@dataclass
class SimOptions:
    dt: float = 1e-6
    T_max: Optional[float] = None  # defaults to 3 * tf
    hold_after_tf: bool = True
    post_tf_voltage: Optional[float] = None  # overrides the hold with a fixed voltage
    no_contact_penalty: float = NO_CONTACT_PENALTY
    initial_lambda: float = 0.0
    record_every: int = 0  # 0 disables the trace

    def horizon(self, p: PhysicalParams) -> float:
        return 3.0 * p.tf if self.T_max is None else self.T_max


@dataclass
class SwitchOutcome:
    contact: bool
    v_c: float
    t_c: float
    J: float
    status: str = "contact"
    trace: Optional[dict] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"contact": self.contact, "v_c": self.v_c, "t_c": self.t_c,
                "J": self.J, "status": self.status}


def _check(z, lam, p):
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(z < 0):
        raise DomainError("reluctance is undefined for z < 0")
    if np.any(np.abs(lam) >= p.lambda_sat):
        raise SaturationError(f"|lambda| must stay below lambda_sat={p.lambda_sat}")
    return z, lam


def _fringe(z, p):
    zpos = np.where(z > 0, z, 1.0)
    value = p.k4 * zpos / (1.0 + p.k5 * zpos * np.log(p.k6 / zpos))
    return np.where(z > 0, value, 0.0)


def reluctance(z, lam, p: PhysicalParams = NOMINAL):
    """Saturation- and fringing-aware reluctance function, 1/H."""
    z, lam = _check(z, lam, p)
    out = p.k1 / (1.0 - np.abs(lam) / p.lambda_sat) + p.k3 + _fringe(z, p)
    return out[()] if out.ndim == 0 else out


def reluctance_dz(z, p: PhysicalParams = NOMINAL):
    """Partial derivative of :func:`reluctance` with respect to position.

    Only the fringing term depends on z; its quotient-rule derivative reduces to
    ``k4 (1 + k5 z) / (1 + k5 z log(k6/z))**2`` with limit ``k4`` at z = 0.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("reluctance is undefined for z < 0")
    zpos = np.where(z > 0, z, 1.0)
    den = 1.0 + p.k5 * zpos * np.log(p.k6 / zpos)
    out = np.where(z > 0, p.k4 * (1.0 + p.k5 * zpos) / den**2, p.k4)
    return out[()] if out.ndim == 0 else out


def dynamics(s: ActuatorState, u: float, p: PhysicalParams = NOMINAL):
    """State derivative (dz/dt, dv/dt, dlambda/dt) with mechanical limit clamps."""
    rel = reluctance(s.z, s.lam, p)
    force = -p.ks * (s.z - p.zs) - 0.5 * s.lam**2 * reluctance_dz(s.z, p)
    dz, dv = s.v, force / p.m
    at_open = s.z >= p.z0 and dv > 0 and s.v >= 0
    at_closed = s.z <= p.zf and dv < 0 and s.v <= 0
    if at_open or at_closed:
        dz, dv = 0.0, 0.0
    dlam = -p.R * s.lam * rel + u
    return float(dz), float(dv), float(dlam)


# --- compiled kernel -------------------------------------------------------

@numba.njit(cache=True)
def _rel_and_slope(z, lam, pa):
    k1, lsat, k3, k4, k5, k6 = pa[3], pa[4], pa[5], pa[6], pa[7], pa[8]
    sat = k1 / (1.0 - abs(lam) / lsat)
    if z > 0.0:
        den = 1.0 + k5 * z * math.log(k6 / z)
        return sat + k3 + k4 * z / den, k4 * (1.0 + k5 * z) / (den * den)
    return sat + k3, k4


@numba.njit(cache=True)
def _deriv(z, v, lam, u, pa):
    ks, zs, m, R, z0 = pa[0], pa[1], pa[2], pa[9], pa[10]
    rel, slope = _rel_and_slope(z, lam, pa)
    a = (-ks * (z - zs) - 0.5 * lam * lam * slope) / m
    dz = v
    if z >= z0 and a > 0.0 and v >= 0.0:
        dz = 0.0
        a = 0.0
    return dz, a, -R * lam * rel + u


@numba.njit(cache=True)
def _hermite(s, h, z0, v0, z1, v1):
    s2 = s * s
    s3 = s2 * s
    pos = ((2 * s3 - 3 * s2 + 1) * z0 + (s3 - 2 * s2 + s) * h * v0
           + (-2 * s3 + 3 * s2) * z1 + (s3 - s2) * h * v1)
    vel = ((6 * s2 - 6 * s) * z0 + (3 * s2 - 4 * s + 1) * h * v0
           + (-6 * s2 + 6 * s) * z1 + (3 * s2 - 2 * s) * h * v1) / h
    return pos, vel


@numba.njit(cache=True)
def integrate(pa, z, v, lam, t_start, dt, u_grid, n_steps, detect_contact, record_every):
    """Fixed-step RK4 from (z, v, lam) at ``t_start``.

    ``u_grid[j]`` is the input at ``t_start + j*dt/2``. Returns
    ``(status, t_c, v_c, z, v, lam, trace)``; the trace has rows (t, z, v, lam, u).
    """
    z0, zf = pa[10], pa[11]
    lim = pa[4] * (1.0 - 1e-9)
    n_rec = n_steps // record_every + 2 if record_every > 0 else 0
    trace = np.empty((n_rec, 5))
    i_rec = 0
    if record_every > 0:
        trace[0] = (t_start, z, v, lam, u_grid[0])
        i_rec = 1
    h = dt
    for n in range(n_steps):
        t = t_start + n * h
        u1 = u_grid[2 * n]
        u2 = u_grid[2 * n + 1]
        u3 = u_grid[2 * n + 2]
        if abs(lam) >= lim:
            return SATURATED, t, 0.0, z, v, lam, trace[:i_rec]
        a1, b1, c1 = _deriv(z, v, lam, u1, pa)
        l2 = lam + 0.5 * h * c1
        if abs(l2) >= lim:
            return SATURATED, t, 0.0, z, v, lam, trace[:i_rec]
        a2, b2, c2 = _deriv(max(z + 0.5 * h * a1, 0.0), v + 0.5 * h * b1, l2, u2, pa)
        l3 = lam + 0.5 * h * c2
        if abs(l3) >= lim:
            return SATURATED, t, 0.0, z, v, lam, trace[:i_rec]
        a3, b3, c3 = _deriv(max(z + 0.5 * h * a2, 0.0), v + 0.5 * h * b2, l3, u2, pa)
        l4 = lam + h * c3
        if abs(l4) >= lim:
            return SATURATED, t, 0.0, z, v, lam, trace[:i_rec]
        a4, b4, c4 = _deriv(max(z + h * a3, 0.0), v + h * b3, l4, u3, pa)
        zn = z + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        vn = v + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        ln = lam + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        if not (math.isfinite(zn) and math.isfinite(vn) and math.isfinite(ln)):
            return NONFINITE, t, 0.0, z, v, lam, trace[:i_rec]
        if detect_contact and zn <= zf < z:
            lo, hi = 0.0, 1.0
            s = 1.0
            pos, vel = zn, vn
            # full-depth bisection; near a tangential landing a position
            # tolerance alone would bias the impact velocity
            while hi - lo > 1e-15:
                s = 0.5 * (lo + hi)
                pos, vel = _hermite(s, h, z, v, zn, vn)
                if pos > zf:
                    lo = s
                else:
                    hi = s
            if record_every > 0:
                trace[i_rec] = (t + s * h, zf, vel, ln, u3)
                i_rec += 1
            return CONTACT, t + s * h, vel, zf, vel, ln, trace[:i_rec]
        if zn > z0:
            zn = z0
            vn = 0.0
        z, v, lam = zn, vn, ln
        if record_every > 0 and (n + 1) % record_every == 0 and i_rec < n_rec:
            trace[i_rec] = (t + h, z, v, lam, u3)
            i_rec += 1
    return NO_CONTACT, t_start + n_steps * h, 0.0, z, v, lam, trace[:i_rec]


# --- drives ----------------------------------------------------------------

class ConstantDrive:
    """Constant coil voltage."""

    def __init__(self, voltage: float):
        self.voltage = float(voltage)

    def __call__(self, t):
        return np.full(np.shape(t), self.voltage)


def _evaluate_drive(u_of_t: Callable, times: np.ndarray) -> np.ndarray:
    try:
        values = np.asarray(u_of_t(times), dtype=float)
        return np.broadcast_to(values, times.shape).astype(float)
    except (TypeError, ValueError):
        return np.array([float(u_of_t(float(t))) for t in times])


def drive_grid(u_of_t: Callable, p: PhysicalParams, opts: SimOptions):
    """Sample the input on the RK4 half-step grid; returns (u_grid, n_steps)."""
    if not opts.dt > 0:
        raise ValueError("dt must be positive")
    T_max = opts.horizon(p)
    if T_max < p.tf:
        raise ValueError("T_max must not be shorter than tf")
    n_steps = int(math.ceil((T_max - p.t0) / opts.dt - 1e-9))
    times = p.t0 + 0.5 * opts.dt * np.arange(2 * n_steps + 1)
    if not opts.hold_after_tf and opts.post_tf_voltage is None:
        return _evaluate_drive(u_of_t, times), n_steps
    active = times <= p.tf
    u = np.empty_like(times)
    u[active] = _evaluate_drive(u_of_t, times[active])
    if not active.all():
        if opts.post_tf_voltage is not None:
            u[~active] = float(opts.post_tf_voltage)
        else:
            u[~active] = _evaluate_drive(u_of_t, np.array([p.tf]))[0]
    return u, n_steps


def simulate_switch(p_true: PhysicalParams, u_of_t: Callable,
                    opts: Optional[SimOptions] = None, **overrides) -> SwitchOutcome:
    """Simulate one closing operation driven by the voltage ``u_of_t``.

    ``u_of_t`` should accept an array of times. Runs that saturate the core or
    lose finiteness are reported as no-contact with the penalty cost.
    """
    opts = SimOptions(**overrides) if opts is None else opts
    u_grid, n_steps = drive_grid(u_of_t, p_true, opts)
    return _run(p_true, u_grid, n_steps, opts)


def simulate_grid(p_true: PhysicalParams, u_grid: np.ndarray, opts: SimOptions) -> SwitchOutcome:
    """Like :func:`simulate_switch` but with a pre-sampled half-step input grid."""
    n_steps = (len(u_grid) - 1) // 2
    return _run(p_true, np.ascontiguousarray(u_grid, dtype=float), n_steps, opts)


def _run(p_true, u_grid, n_steps, opts):
    if not np.all(np.isfinite(u_grid)):
        return SwitchOutcome(False, 0.0, math.nan, opts.no_contact_penalty, "nonfinite")
    status, t_c, v_c, *_, trace = integrate(
        p_true.as_array(), p_true.z0, 0.0, float(opts.initial_lambda), p_true.t0,
        opts.dt, u_grid, n_steps, True, int(opts.record_every))
    tr = None
    if opts.record_every > 0:
        tr = {k: trace[:, i].copy() for i, k in enumerate(("t", "z", "v", "lambda", "u"))}
    if status == CONTACT:
        return SwitchOutcome(True, float(v_c), float(t_c), abs(float(v_c)), "contact", tr)
    label = {NO_CONTACT: "no_contact", SATURATED: "saturated", NONFINITE: "nonfinite"}[status]
    return SwitchOutcome(False, 0.0, math.nan, opts.no_contact_penalty, label, tr)
