"""Operational-zone directives and the voltage boxes they induce.

Power caps are realised on the high-voltage branch of the P-V curve so the
feasible set stays an interval. Array caps are split evenly across modules.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .pvmodel import Environment, PlantModel, mpp_oracle, power, voc_at


class Mode(str, enum.Enum):
    MPPT = "MPPT"
    DELTA = "DELTA"
    RAMP = "RAMP"
    ABS = "ABS"
    VMAX = "VMAX"


@dataclass(frozen=True)
class ConstraintDirective:
    """A grid directive; ``limit`` is watts (DELTA reserve, ABS cap), W/s (RAMP) or volts (VMAX)."""

    mode: Mode = Mode.MPPT
    limit: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.MPPT:
            object.__setattr__(self, "limit", 0.0)
        elif self.mode is Mode.DELTA:
            if not self.limit >= 0.0:
                raise ValueError(f"DELTA reserve must be >= 0, got {self.limit}")
        elif not self.limit > 0.0:
            raise ValueError(f"{self.mode.value} limit must be > 0, got {self.limit}")

    @classmethod
    def mppt(cls) -> ConstraintDirective:
        return cls(Mode.MPPT)

    @classmethod
    def delta_power(cls, reserve: float) -> ConstraintDirective:
        return cls(Mode.DELTA, reserve)

    @classmethod
    def ramp_rate(cls, rate: float) -> ConstraintDirective:
        return cls(Mode.RAMP, rate)

    @classmethod
    def absolute_power(cls, cap: float) -> ConstraintDirective:
        return cls(Mode.ABS, cap)

    @classmethod
    def voltage_max(cls, cap: float) -> ConstraintDirective:
        return cls(Mode.VMAX, cap)


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Closed box ``[lower, upper]`` over the per-module voltage vector."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d vectors of equal length")
        if np.any(lo < 0.0) or np.any(lo > hi):
            raise ValueError("need 0 <= lower <= upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, lower: float, upper: float, n: int) -> FeasibleSet:
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeasibleSet):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __len__(self) -> int:
        return self.lower.size

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def project(x, fs: FeasibleSet) -> np.ndarray:
    """Euclidean projection onto the box (a coordinatewise clamp)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite point")
    return np.minimum(np.maximum(x, fs.lower), fs.upper)


def right_branch_voltage(model: PlantModel, env: Environment, cap_per_module: float) -> float:
    """Voltage on the decreasing side of the P-V curve where power equals ``cap_per_module``."""
    voc = voc_at(model, env)
    v_mpp, p_mpp = mpp_oracle(model, env)
    if cap_per_module >= p_mpp:
        return v_mpp
    if cap_per_module <= 0.0:
        return voc
    return bisect(lambda v: power(model, env, v) - cap_per_module, v_mpp, voc, xtol=1e-12, maxiter=200)


def realize(
    directive: ConstraintDirective,
    model: PlantModel,
    env: Environment,
    prev_power: float = 0.0,
    dt: float = 0.1,
) -> FeasibleSet:
    """Turn a directive into the feasible voltage box for the current step.

    ``prev_power`` (array watts) and ``dt`` only matter for ramp limits.
    """
    n = model.module_count
    voc = voc_at(model, env)
    mode = directive.mode
    if mode is Mode.MPPT:
        return FeasibleSet.uniform(0.0, voc, n)
    if mode is Mode.VMAX:
        return FeasibleSet.uniform(0.0, min(directive.limit, voc), n)

    _, p_mpp = mpp_oracle(model, env)
    if mode is Mode.ABS:
        cap = directive.limit
    elif mode is Mode.DELTA:
        cap = max(n * p_mpp - directive.limit, 0.0)
    elif mode is Mode.RAMP:
        if prev_power < 0.0:
            raise ValueError("prev_power must be >= 0")
        cap = prev_power + directive.limit * dt
    else:  # pragma: no cover
        raise ValueError(f"unknown mode {mode!r}")

    cap_m = cap / n
    if cap_m >= p_mpp:
        return FeasibleSet.uniform(0.0, voc, n)
    return FeasibleSet.uniform(right_branch_voltage(model, env, cap_m), voc, n)
