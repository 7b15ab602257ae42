"""Physical parameters of the single-coil reluctance actuator."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

# Order of the uncertain parameter vector; R and the trajectory limits are known exactly.
UNCERTAIN = ("ks", "zs", "m", "k1", "lambda_sat", "k3", "k4", "k5", "k6")
FIXED = ("R", "z0", "zf", "t0", "tf")


class ParameterError(ValueError):
    """Raised when a parameter set violates its physical invariants."""


@dataclass(frozen=True)
class PhysicalParams:
    """SI-unit parameter set of the actuator model.

    ``k1`` and ``k3`` are the core and gap reluctance constants (1/H), ``k4`` the
    gap reluctance slope (1/(H m)), and ``k5``/``k6`` the fringing constants.
    """

    ks: float = 55.0
    zs: float = 0.015
    m: float = 1.6e-3
    k1: float = 1.35
    lambda_sat: float = 0.0229
    k3: float = 3.88
    k4: float = 7.67e4
    k5: float = 1320.0
    k6: float = 9.73e-3
    R: float = 50.0
    z0: float = 1e-3
    zf: float = 0.0
    t0: float = 0.0
    tf: float = 3.5e-3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("ks", "m", "k1", "lambda_sat", "k3", "k4", "k5", "k6", "R"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive and finite, got {value!r}")
        if not (self.z0 > self.zf >= 0):
            raise ParameterError(f"need z0 > zf >= 0, got z0={self.z0}, zf={self.zf}")
        if not self.tf > self.t0:
            raise ParameterError(f"need tf > t0, got t0={self.t0}, tf={self.tf}")

    @property
    def uncertain(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in UNCERTAIN], dtype=float)

    def with_uncertain(self, values) -> "PhysicalParams":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(UNCERTAIN),):
            raise ValueError(f"expected {len(UNCERTAIN)} values, got shape {values.shape}")
        return replace(self, **{n: float(v) for n, v in zip(UNCERTAIN, values)})

    def as_array(self) -> np.ndarray:
        """Flat float array in field order, as consumed by the compiled kernels."""
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown parameter fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "PhysicalParams":
        """Load from a JSON file path or a JSON string."""
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        return cls.from_dict(json.loads(text))


NOMINAL = PhysicalParams()
