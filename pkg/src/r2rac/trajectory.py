"""Quintic soft-landing position reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5, lowest order first
_SHAPE = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


@dataclass(frozen=True)
class QuinticTrajectory:
    z_start: float
    z_end: float
    t_start: float
    t_end: float
    coeffs: tuple  # polynomial in normalized time, lowest order first

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def __call__(self, t):
        return evaluate(self, t)


def make_quintic(z_start: float, z_end: float, t_start: float, t_end: float) -> QuinticTrajectory:
    """Rest-to-rest quintic from ``z_start`` to ``z_end``.

    Zero velocity and acceleration at both ends fix the polynomial uniquely.
    """
    if not t_end > t_start:
        raise ValueError(f"degenerate interval: t_end={t_end} <= t_start={t_start}")
    coeffs = _SHAPE * (z_end - z_start)
    coeffs[0] += z_start
    return QuinticTrajectory(float(z_start), float(z_end), float(t_start), float(t_end),
                             tuple(float(c) for c in coeffs))


def evaluate(traj: QuinticTrajectory, t):
    """Position and its first three time derivatives at ``t``.

    Outside ``[t_start, t_end]`` the nearer endpoint position is held and all
    derivatives are zero.
    """
    t = np.asarray(t, dtype=float)
    T = traj.duration
    tau = (t - traj.t_start) / T
    inside = (tau >= 0.0) & (tau <= 1.0)
    tc = np.clip(tau, 0.0, 1.0)
    c = traj.coeffs
    z = c[0] + tc * (c[1] + tc * (c[2] + tc * (c[3] + tc * (c[4] + tc * c[5]))))
    dz = (c[1] + tc * (2 * c[2] + tc * (3 * c[3] + tc * (4 * c[4] + tc * 5 * c[5])))) / T
    ddz = (2 * c[2] + tc * (6 * c[3] + tc * (12 * c[4] + tc * 20 * c[5]))) / T**2
    dddz = (6 * c[3] + tc * (24 * c[4] + tc * 60 * c[5])) / T**3
    # endpoints exactly, not up to polynomial round-off
    z = np.where(tc >= 1.0, traj.z_end, np.where(tc <= 0.0, traj.z_start, z))
    zero = np.zeros_like(tc)
    dz = np.where(inside, dz, zero)
    ddz = np.where(inside, ddz, zero)
    dddz = np.where(inside, dddz, zero)
    if t.ndim == 0:
        return float(z), float(dz), float(ddz), float(dddz)
    return z, dz, ddz, dddz
