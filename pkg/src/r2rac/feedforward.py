"""Flatness-based feedforward voltage, its parameter sensitivities and the
sensitivity basis used to rotate the search coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .actuator import _rel_and_slope
from .params import NOMINAL, UNCERTAIN, ParameterError, PhysicalParams

Q = len(UNCERTAIN)
FEASIBILITY_NODES = 1000
SENSITIVITY_STEP = 1e-6
FISHER_NODES = 201


class InfeasibleTrajectory(ValueError):
    """The reference would need a repulsive magnetic force or a saturated core."""


class PositivityError(ParameterError):
    """A normalized controller parameter is not strictly positive."""


@dataclass(frozen=True)
class ControllerParams:
    """Normalized controller parameters: ``p_i = theta_i * nominal_i``."""

    theta: np.ndarray
    nominal_physical: PhysicalParams = NOMINAL

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.shape != (Q,):
            raise ValueError(f"theta must have {Q} entries, got {theta.shape}")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise PositivityError(f"theta must be strictly positive, got {theta}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def nominal(cls, physical: PhysicalParams = NOMINAL) -> "ControllerParams":
        return cls(np.ones(Q), physical)

    def physical(self) -> PhysicalParams:
        return self.nominal_physical.with_uncertain(self.theta * self.nominal_physical.uncertain)

    def replace_theta(self, theta) -> "ControllerParams":
        return ControllerParams(theta, self.nominal_physical)


@numba.njit(cache=True)
def _quintic(t, t0, tf, za, zb, clamp):
    """Position and first three derivatives of the rest-to-rest quintic."""
    T = tf - t0
    tau = (t - t0) / T
    if clamp and (tau < 0.0 or tau > 1.0):
        return (za if tau < 0.0 else zb), 0.0, 0.0, 0.0
    dz = zb - za
    pos = za + dz * tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
    vel = dz * tau * tau * (30.0 + tau * (-60.0 + 30.0 * tau)) / T
    acc = dz * tau * (60.0 + tau * (-180.0 + 120.0 * tau)) / (T * T)
    jerk = dz * (60.0 + tau * (-360.0 + 360.0 * tau)) / (T * T * T)
    return pos, vel, acc, jerk


@numba.njit(cache=True)
def _slope_dz(z, pa):
    """Second position derivative of the reluctance; zero at z = 0 by convention
    (the log singularity there is always multiplied by a vanishing velocity)."""
    k4, k5, k6 = pa[6], pa[7], pa[8]
    if z <= 0.0:
        return 0.0
    L = math.log(k6 / z)
    den = 1.0 + k5 * z * L
    return k4 * k5 * (den - 2.0 * (1.0 + k5 * z) * (L - 1.0)) / (den * den * den)


@numba.njit(cache=True)
def _radicand(t, pa, clamp):
    ks, zs, m = pa[0], pa[1], pa[2]
    z, _, acc, _ = _quintic(t, pa[12], pa[13], pa[10], pa[11], clamp)
    _, slope = _rel_and_slope(max(z, 0.0), 0.0, pa)
    return -2.0 * (m * acc + ks * (z - zs)) / slope, z


@numba.njit(cache=True)
def _flux_ref(t, pa, clamp):
    rad, z = _radicand(t, pa, clamp)
    if rad < 0.0:
        return math.nan, z
    return math.sqrt(rad), z


@numba.njit(cache=True)
def _flux_rate(t, pa):
    """Chain-rule time derivative of the reference flux."""
    ks, zs, m = pa[0], pa[1], pa[2]
    z, vel, acc, jerk = _quintic(t, pa[12], pa[13], pa[10], pa[11], True)
    z = max(z, 0.0)
    _, slope = _rel_and_slope(z, 0.0, pa)
    num = -2.0 * (m * acc + ks * (z - zs))
    dnum = -2.0 * (m * jerk + ks * vel)
    dslope = _slope_dz(z, pa) * vel
    lam = math.sqrt(num / slope) if num >= 0.0 else math.nan
    return (dnum * slope - num * dslope) / (2.0 * lam * slope * slope)


@numba.njit(cache=True)
def _reference(times, pa, h):
    """(lambda_ref, dlambda_ref/dt, u_ff) at each time; held at tf afterwards.

    ``h > 0`` switches the flux rate to a central difference of step ``h``.
    """
    n = times.shape[0]
    lam = np.empty(n)
    dlam = np.empty(n)
    u = np.empty(n)
    R, lsat, tf = pa[9], pa[4], pa[13]
    for i in range(n):
        t = min(times[i], tf)
        l0, z = _flux_ref(t, pa, True)
        if h > 0.0:
            # polynomial continuation past the ends avoids a one-sided kink
            lp, _ = _flux_ref(t + h, pa, False)
            lm, _ = _flux_ref(t - h, pa, False)
            dlam[i] = (lp - lm) / (2.0 * h)
        else:
            dlam[i] = _flux_rate(t, pa)
        lam[i] = l0
        if abs(l0) < lsat:
            rel, _ = _rel_and_slope(max(z, 0.0), l0, pa)
            u[i] = dlam[i] + R * l0 * rel
        else:
            u[i] = math.nan
    return lam, dlam, u


@numba.njit(cache=True)
def _min_margin(pa, n):
    """Smallest radicand and largest flux over an n-point grid on [t0, tf]."""
    t0, tf = pa[12], pa[13]
    worst = math.inf
    peak = 0.0
    for i in range(n):
        t = t0 + (tf - t0) * i / (n - 1)
        rad, _ = _radicand(t, pa, True)
        worst = min(worst, rad)
        if rad > 0.0:
            peak = max(peak, math.sqrt(rad))
    return worst, peak


class Feedforward:
    """Feedforward law ``u_ff(t)`` for one controller parameter vector.

    Construction checks feasibility of the reference flux on a grid over
    ``[t0, tf]`` and raises :class:`InfeasibleTrajectory` on failure.
    """

    def __init__(self, theta: ControllerParams, check: bool = True):
        self.theta = theta
        self.params = theta.physical()
        self._pa = self.params.as_array()
        if check:
            worst, peak = _min_margin(self._pa, FEASIBILITY_NODES)
            if not worst >= 0.0:
                raise InfeasibleTrajectory(f"negative flux radicand ({worst:.3g}) on the reference")
            if not peak < self.params.lambda_sat:
                raise InfeasibleTrajectory(f"reference flux {peak:.4g} Wb reaches saturation")

    def reference(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _reference(np.ascontiguousarray(t), self._pa, 0.0)

    def lambda_ref(self, t, h: float = 0.0):
        """Reference flux and flux rate; ``h > 0`` differentiates numerically."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lam, dlam, _ = _reference(np.ascontiguousarray(t), self._pa, float(h))
        return (float(lam[0]), float(dlam[0])) if scalar else (lam, dlam)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        _, _, u = self.reference(t)
        return float(u[0]) if scalar else u


def lambda_ref(t, theta: ControllerParams):
    """Reference flux linkage and its rate along the quintic trajectory."""
    return Feedforward(theta).lambda_ref(t)


def u_ff(t, theta: ControllerParams):
    """Feedforward voltage obtained by inverting the flux equation."""
    return Feedforward(theta)(t)


def _default_law(t, theta: ControllerParams):
    return Feedforward(theta, check=False)(t)


def sensitivity(t, theta: ControllerParams, h: float = SENSITIVITY_STEP,
                law: Optional[Callable] = None) -> np.ndarray:
    """Central-difference ``d u_ff / d theta``; shape ``t.shape + (q,)``.

    ``law(t, theta)`` replaces the feedforward law, e.g. for test controllers.
    """
    law = _default_law if law is None else law
    t = np.asarray(t, dtype=float)
    base = theta.theta
    out = np.empty(t.shape + (base.size,))
    for i in range(base.size):
        step = h * max(abs(base[i]), 1.0)
        up, down = base.copy(), base.copy()
        up[i] += step
        down[i] -= step
        diff = np.asarray(law(t, theta.replace_theta(up))) - np.asarray(law(t, theta.replace_theta(down)))
        out[..., i] = diff / (2.0 * step)
    if not np.all(np.isfinite(out)):
        raise InfeasibleTrajectory("feedforward not evaluable around theta")
    return out


def simpson_weights(n: int, a: float, b: float) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError("composite Simpson needs an odd node count >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (b - a) / (3.0 * (n - 1))


@dataclass(frozen=True)
class SensitivityBasis:
    F: np.ndarray
    V: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_matrix(cls, F) -> "SensitivityBasis":
        F = np.asarray(F, dtype=float)
        if not np.all(np.isfinite(F)):
            raise np.linalg.LinAlgError("Fisher matrix has non-finite entries")
        vals, vecs = np.linalg.eigh(F)
        order = np.argsort(vals, kind="stable")[::-1]
        vals, vecs = vals[order], vecs[:, order]
        idx = np.argmax(np.abs(vecs), axis=0)
        signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
        signs[signs == 0] = 1.0
        return cls(F, vecs * signs, vals)

    def to_dict(self) -> dict:
        return {"F": self.F.tolist(), "V": self.V.tolist(),
                "eigenvalues": self.eigenvalues.tolist(), "parameters": list(UNCERTAIN)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fisher(theta_nom: ControllerParams, nodes: int = FISHER_NODES,
           law: Optional[Callable] = None) -> SensitivityBasis:
    """Time-integrated Gram matrix of the feedforward sensitivities and its
    eigenbasis, columns ordered by decreasing eigenvalue."""
    p = theta_nom.nominal_physical
    t = np.linspace(p.t0, p.tf, nodes)
    S = sensitivity(t, theta_nom, law=law)
    w = simpson_weights(nodes, p.t0, p.tf)
    F = (S * w[:, None]).T @ S
    F = 0.5 * (F + F.T)
    return SensitivityBasis.from_matrix(F)


def phi_to_theta(theta_nom: ControllerParams, V: np.ndarray, phi) -> ControllerParams:
    """Map rotated coordinates back to controller parameters around the anchor."""
    theta = theta_nom.theta + np.asarray(V) @ np.asarray(phi, dtype=float)
    if np.any(theta <= 0):
        raise PositivityError(f"theta leaves the positive orthant: {theta}")
    return theta_nom.replace_theta(theta)


def theta_to_phi(theta_nom: ControllerParams, V: np.ndarray, theta: ControllerParams) -> np.ndarray:
    return np.asarray(V).T @ (theta.theta - theta_nom.theta)
