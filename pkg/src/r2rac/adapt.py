"""Run-to-run adaptation laws with an ask/tell interface.

:class:`AdaptiveCoordinates` turns the controller tuning into a sequence of
searches in a rotated coordinate system: it sweeps coordinates (ordered by
decreasing feedforward sensitivity) until one descends, follows that coordinate
with a sign-descent line search, then re-anchors and recomputes the basis.
:class:`PatternSearch` is the fixed-basis, four-dimensional baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .feedforward import (ControllerParams, InfeasibleTrajectory, PositivityError,
                          SensitivityBasis, fisher)
from .stepsize import (ScaledMinimum, StepSizeState, Strategy, gb_step, select_delta,
                       update_df, update_filters)


class ProtocolError(RuntimeError):
    """ask/tell called out of order."""


class Phase(str, Enum):
    EVAL_CENTER = "EvalCenter"
    EXPLORE = "Explore"
    EXPLOIT = "Exploit"
    RESET = "Reset"
    IDLE = "Idle"


@dataclass(frozen=True)
class Proposal:
    phi: np.ndarray
    theta_vector: np.ndarray
    theta: Optional[ControllerParams]  # None when the point leaves the positive orthant


TRACE_FIELDS = ("k", "phase", "d", "J", "delta", "J_filt", "g_filt", "J_star", "phi", "theta")


def _clean(J) -> float:
    J = float(J)
    return J if math.isfinite(J) else math.inf


class _Base:
    def __init__(self, theta_nom: ControllerParams, basis: Optional[SensitivityBasis]):
        self.theta_nom = theta_nom
        self.basis = fisher(theta_nom) if basis is None else basis
        self.q = theta_nom.theta.size
        self.eval_count = 0
        self.J_min = math.inf
        self.trace: list[dict] = []
        self._pending: Optional[Proposal] = None

    def _propose(self, phi) -> Proposal:
        if self._pending is not None:
            raise ProtocolError("ask() called twice without tell()")
        phi = np.array(phi, dtype=float)
        vec = self.theta_nom.theta + self.basis.V @ phi
        theta = None
        if np.all(vec > 0):
            try:
                theta = self.theta_nom.replace_theta(vec)
            except PositivityError:
                theta = None
        self._pending = Proposal(phi, vec, theta)
        return self._pending

    def _take(self, J) -> tuple[Proposal, float]:
        if self._pending is None:
            raise ProtocolError("tell() without an outstanding proposal")
        prop, self._pending = self._pending, None
        J = _clean(J)
        self.eval_count += 1
        self.J_min = min(self.J_min, J)
        return prop, J

    @property
    def best_theta(self) -> np.ndarray:
        return self.theta_nom.theta + self.basis.V @ self.phi_best


class AdaptiveCoordinates(_Base):
    """Adaptive-coordinates run-to-run law.

    ``strategy`` selects the step-size rule (DF, GB or Hybrid) and ``target``
    the J* schedule ``target(k, J_min)``; GB defaults to ``0.9 * J_min``.
    ``basis_fn`` recomputes the sensitivity basis after a re-anchor.
    """

    def __init__(self, theta_nom: ControllerParams, strategy="Hybrid",
                 step: Optional[StepSizeState] = None, target: Optional[Callable] = None,
                 basis: Optional[SensitivityBasis] = None,
                 basis_fn: Callable[[ControllerParams], SensitivityBasis] = fisher,
                 censor: float = math.inf, seed_slope: bool = False):
        super().__init__(theta_nom, basis)
        self.censor = censor
        self.seed_slope = seed_slope
        self._slope_seen = False
        self.strategy = Strategy.parse(strategy)
        if self.strategy is Strategy.PS:
            raise ValueError("use PatternSearch for the PS+ baseline")
        self.step = StepSizeState() if step is None else step
        if target is None:
            if self.strategy is Strategy.HYBRID:
                raise ValueError("the hybrid strategy needs a J* schedule")
            target = ScaledMinimum()
        self.target = target
        self.basis_fn = basis_fn
        self.phase = Phase.EVAL_CENTER
        self.d = 0
        self.phi_best = np.zeros(self.q)
        self.J_best = math.inf
        self.resets = 0
        self._dir = 0.0
        self._plus: Optional[tuple[Proposal, float]] = None
        self._misses = 0
        self._prev: Optional[tuple[np.ndarray, float]] = None

    @property
    def delta(self) -> float:
        return self.step.delta

    def ask(self) -> Proposal:
        e = np.zeros(self.q)
        if self.phase in (Phase.EVAL_CENTER, Phase.IDLE):
            return self._propose(self.phi_best)
        e[self.d - 1] = 1.0
        if self.phase is Phase.EXPLORE:
            sign = 1.0 if self._plus is None else -1.0
            return self._propose(self.phi_best + sign * self.delta * e)
        return self._propose(self.phi_best + self._dir * self.delta * e)

    def tell(self, J) -> None:
        prop, J = self._take(J)
        phase, d = self.phase, self.d
        self._filters(prop, J)
        J_told = J
        if prop.theta is None:
            J = math.inf  # a point outside the positive orthant never becomes the incumbent
        if phase in (Phase.EVAL_CENTER, Phase.IDLE):
            # the center is the incumbent, so a repeated measurement only lowers it
            self.J_best = min(self.J_best, J)
            if phase is Phase.EVAL_CENTER:
                self._next_coordinate()
        elif phase is Phase.EXPLORE:
            self._tell_explore(prop, J)
        else:
            self._tell_exploit(prop, J)
        self._record(prop, J_told, phase, d)

    def _filters(self, prop: Proposal, J: float) -> None:
        ss = self.step
        if J >= self.censor:
            return
        if math.isnan(ss.J_filt):
            ss.J_filt = J
        elif self._prev is not None and math.isfinite(J) and math.isfinite(self._prev[1]):
            dist = np.linalg.norm(prop.theta_vector - self._prev[0])
            if self.seed_slope and not self._slope_seen and dist > 0:
                ss.g_filt = abs(J - self._prev[1]) / dist
            update_filters(ss, J, self._prev[1], prop.theta_vector, self._prev[0])
            self._slope_seen = self._slope_seen or dist > 0
        self._prev = (prop.theta_vector, J)

    def _update_delta(self, improved: bool) -> None:
        ss = self.step
        update_df(ss, improved)
        ss.J_star = float(self.target(self.eval_count, self.J_min))
        select_delta(ss, self.strategy)

    def _next_coordinate(self) -> None:
        self.d = self.d % self.q + 1
        self.phase = Phase.EXPLORE

    def _tell_explore(self, prop: Proposal, J: float) -> None:
        if self._plus is None:
            self._plus = (prop, J)
            return
        (p_plus, J_plus), self._plus = self._plus, None
        best, J_next = (p_plus, J_plus) if J_plus <= J else (prop, J)
        # the step rule expands on ties while the phase guards are strict
        self._update_delta(J_next <= self.J_best)
        if J_next < self.J_best:
            self._dir = 1.0 if best is p_plus else -1.0
            self.phi_best, self.J_best = best.phi, J_next
            self._misses = 0
            self.phase = Phase.EXPLOIT
            return
        self._misses += 1
        if self._misses >= self.q and self.step.delta <= self.step.s_min:
            self.phase = Phase.IDLE
        else:
            self._next_coordinate()

    def _tell_exploit(self, prop: Proposal, J: float) -> None:
        self._update_delta(J <= self.J_best)
        if J < self.J_best:
            self.phi_best, self.J_best = prop.phi, J
        else:
            self._reset()

    def _reset(self) -> None:
        self.phase = Phase.RESET
        if self.d != 1:
            anchor = self.theta_nom.replace_theta(self.best_theta)
            try:
                basis = self.basis_fn(anchor)
            except (InfeasibleTrajectory, np.linalg.LinAlgError):
                basis = self.basis
            self.theta_nom, self.basis = anchor, basis
            self.phi_best = np.zeros(self.q)
            self.d = 0
            self.resets += 1
        self._prev = None
        self.phase = Phase.EVAL_CENTER

    def _record(self, prop: Proposal, J: float, phase: Phase, d: int) -> None:
        ss = self.step
        self.trace.append({
            "k": self.eval_count, "phase": phase.value, "d": d, "J": J, "delta": ss.delta,
            "J_filt": ss.J_filt, "g_filt": ss.g_filt, "J_star": ss.J_star,
            "phi": prop.phi.copy(), "theta": prop.theta_vector.copy(),
        })


class PatternSearch(_Base):
    """Compass search on the leading ``n_dims`` columns of a fixed basis.

    Each pattern evaluates the center then ``+s`` and ``-s`` along every
    active coordinate (``2 n + 1`` operations) before deciding to move.
    """

    def __init__(self, theta_nom: ControllerParams, step: Optional[StepSizeState] = None,
                 basis: Optional[SensitivityBasis] = None, n_dims: int = 4):
        super().__init__(theta_nom, basis)
        self.step = step if step is not None else StepSizeState(alpha_con=0.5, alpha_exp=2.0)
        self.n_dims = n_dims
        self.phi_best = np.zeros(self.q)
        self.J_best = math.inf
        self._results: list[tuple[Proposal, float]] = []

    @property
    def delta(self) -> float:
        return self.step.s

    @property
    def pattern_size(self) -> int:
        return 2 * self.n_dims + 1

    def ask(self) -> Proposal:
        i = len(self._results)
        if i == 0:
            return self._propose(self.phi_best)
        e = np.zeros(self.q)
        e[(i - 1) // 2] = 1.0
        sign = 1.0 if i % 2 == 1 else -1.0
        return self._propose(self.phi_best + sign * self.step.s * e)

    def tell(self, J) -> None:
        prop, J = self._take(J)
        self._results.append((prop, J if prop.theta is not None else math.inf))
        i = len(self._results)
        d = 0 if i == 1 else (i - 2) // 2 + 1
        if i == 1:
            self.J_best = min(self.J_best, J)
        if i == self.pattern_size:
            center = self.J_best
            cand, J_cand = min(self._results[1:], key=lambda r: r[1])
            if J_cand < center:
                self.phi_best, self.J_best = cand.phi, J_cand
            update_df(self.step, J_cand <= center)
            self.step.delta = self.step.s
            self._results = []
        self.trace.append({
            "k": self.eval_count, "phase": "Pattern", "d": d, "J": J, "delta": self.step.s,
            "J_filt": math.nan, "g_filt": math.nan, "J_star": math.nan,
            "phi": prop.phi.copy(), "theta": prop.theta_vector.copy(),
        })
