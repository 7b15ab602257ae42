"""Step-size rules for the coordinate search.

Three ways of choosing the step ``delta``: the derivative-free
expansion/contraction rule, a gradient-based step from filtered cost and slope,
and a hybrid that switches between them against a target cost ``J*``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class Strategy(str, Enum):
    PS = "PS+"
    DF = "DF"
    GB = "GB"
    HYBRID = "Hybrid"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValueError(f"unknown strategy {value!r}; choose from {[m.value for m in cls]}")


@dataclass
class StepSizeState:
    s: float = 0.2
    s_min: float = 2e-10
    s_max: float = 2.0
    alpha_con: float = 0.7
    alpha_exp: float = 1.1
    beta: float = 0.8
    delta: float = math.nan  # defaults to s
    delta_gb: float = math.nan
    J_filt: float = math.nan  # unset until the first cost
    g_filt: float = 0.0
    J_star: float = math.inf
    gb_form: str = "ratio"  # "ratio": J~/g~ ; "excess": (J~ - J*)/g~

    def __post_init__(self):
        if not 0 < self.alpha_con < 1 < self.alpha_exp:
            raise ValueError("need 0 < alpha_con < 1 < alpha_exp")
        if not 0 < self.s_min <= self.s_max:
            raise ValueError("need 0 < s_min <= s_max")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.gb_form not in ("ratio", "excess"):
            raise ValueError(f"unknown gb_form {self.gb_form!r}")
        self.s = min(max(self.s, self.s_min), self.s_max)
        if math.isnan(self.delta):
            self.delta = self.s


def update_df(ss: StepSizeState, improved: bool) -> float:
    """Expand the derivative-free step on improvement, contract otherwise."""
    if improved:
        ss.s = min(ss.alpha_exp * ss.s, ss.s_max)
    else:
        ss.s = max(ss.alpha_con * ss.s, ss.s_min)
    return ss.s


def update_filters(ss: StepSizeState, J_k: float, J_prev: float, x_k, x_prev):
    """Exponential cost filter and root-mean-square slope filter.

    The slope is measured between consecutive evaluated points; a zero
    displacement leaves both filters untouched.
    """
    dist = float(np.linalg.norm(np.asarray(x_k, dtype=float) - np.asarray(x_prev, dtype=float)))
    if dist == 0.0:
        return ss.J_filt, ss.g_filt
    if math.isnan(ss.J_filt):
        ss.J_filt = J_k
    else:
        ss.J_filt = ss.beta * ss.J_filt + (1.0 - ss.beta) * J_k
    slope = (J_k - J_prev) / dist
    ss.g_filt = math.sqrt(ss.beta * ss.g_filt**2 + (1.0 - ss.beta) * slope**2)
    return ss.J_filt, ss.g_filt


def gb_step(ss: StepSizeState) -> float:
    if not ss.g_filt > 0.0 or math.isnan(ss.J_filt):
        ss.delta_gb = ss.s_max
    else:
        num = ss.J_filt if ss.gb_form == "ratio" else ss.J_filt - ss.J_star
        ss.delta_gb = min(max(num / ss.g_filt, ss.s_min), ss.s_max)
    return ss.delta_gb


def select_delta(ss: StepSizeState, strategy) -> float:
    """Pick the active step; ``ss.J_star`` must already be refreshed."""
    strategy = Strategy.parse(strategy)
    if strategy in (Strategy.DF, Strategy.PS):
        ss.delta = ss.s
    elif strategy is Strategy.GB:
        ss.delta = gb_step(ss)
    else:
        gb = gb_step(ss)
        ss.delta = ss.s if ss.J_filt <= ss.J_star else gb
    return ss.delta


# --- target cost schedules --------------------------------------------------
# Each schedule maps (evaluation count k >= 1, minimum cost so far) to J*.

@dataclass(frozen=True)
class ConstantTarget:
    value: float

    def __call__(self, k: int, J_min: float) -> float:
        return self.value


@dataclass(frozen=True)
class ScaledMinimum:
    gamma: float = 0.9

    def __call__(self, k: int, J_min: float) -> float:
        return self.gamma * J_min


@dataclass(frozen=True)
class ExponentialTarget:
    """Smooth decay from the uncontrolled cost to a floor."""

    start: float
    tau: float = 40.0
    floor: float = 0.05

    def __call__(self, k: int, J_min: float) -> float:
        return self.start * math.exp(-k / self.tau) + self.floor


class TabulatedTarget:
    """Per-operation J* table; the last entry is held past its end."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("target table must be a non-empty 1-D sequence")

    def __call__(self, k: int, J_min: float) -> float:
        return float(self.values[min(max(k, 1), self.values.size) - 1])

    @classmethod
    def from_csv(cls, path) -> "TabulatedTarget":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "J_star" not in rows[0]:
            raise ValueError(f"{path}: expected a CSV with a 'J_star' column")
        return cls([float(r["J_star"]) for r in rows])

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["op", "J_star"])
            for i, v in enumerate(self.values, start=1):
                w.writerow([i, repr(float(v))])
