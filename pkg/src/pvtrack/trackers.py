"""Online step operators: projected gradient descent, P&O and fixed voltage.

Each step maps the current operating point and what the tracker can observe
at step ``t`` to the next operating point inside ``X_t``. The step functions
are pure; the ``Tracker`` classes bind them to an observation source.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .constraints import FeasibleSet, project
from .metrics import constrained_oracle
from .pvmodel import REFERENCE_DATASHEET, Environment, PlantModel, array_power, cost_gradient


@dataclass(frozen=True)
class StepConfig:
    opgd_step_size: float = 0.2
    po_perturb: float = 0.5
    constant_setpoint: float = 29.0

    def __post_init__(self) -> None:
        if not self.opgd_step_size > 0:
            raise ValueError("opgd_step_size must be > 0")
        if not self.po_perturb > 0:
            raise ValueError("po_perturb must be > 0")
        if not 0 < self.constant_setpoint < REFERENCE_DATASHEET.open_circuit_voltage:
            raise ValueError("constant_setpoint must lie in (0, Voc at STC)")


@dataclass(frozen=True, eq=False)
class TrackerState:
    """Operating point plus whatever memory the tracker keeps.

    ``last_power`` is ``None`` until P&O has taken its first reading.
    """

    x: np.ndarray
    last_power: float | None = None
    direction: int = 1
    setpoint: float | None = None

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("x must be a finite 1-d vector")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


def opgd_step(state: TrackerState, grad, fs: FeasibleSet, cfg: StepConfig) -> TrackerState:
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    return replace(state, x=project(state.x - cfg.opgd_step_size * grad, fs))


def po_step(state: TrackerState, measured_power: float, fs: FeasibleSet, cfg: StepConfig) -> TrackerState:
    """Hill climbing: keep going while power rises, turn around otherwise."""
    direction = state.direction
    if state.last_power is not None and not measured_power > state.last_power:
        direction = -direction
    x = project(state.x + direction * cfg.po_perturb, fs)
    return replace(state, x=x, last_power=float(measured_power), direction=direction)


def constant_voltage_step(state: TrackerState, fs: FeasibleSet) -> TrackerState:
    if state.setpoint is None:
        raise ValueError("constant-voltage state carries no setpoint")
    return replace(state, x=project(np.full(len(fs), state.setpoint), fs))


def duty_cycle(v_setpoint: float, bus_voltage: float) -> float:
    """Ideal buck conversion ratio; informational only."""
    if not bus_voltage > 0:
        raise ValueError("bus_voltage must be > 0")
    return float(min(max(v_setpoint / bus_voltage, 0.0), 1.0))


class Observation(Protocol):
    """What a tracker may sense at the current step."""

    def power(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PlantObservation:
    """Exact sensing of the plant under one environment."""

    model: PlantModel
    env: Environment

    def power(self, x: np.ndarray) -> float:
        return array_power(self.model, self.env, x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(cost_gradient(self.model, self.env, x), dtype=float)


class Tracker:
    name = "tracker"

    def __init__(self, cfg: StepConfig | None = None):
        self.cfg = cfg or StepConfig()

    def initial_state(self, x0: np.ndarray) -> TrackerState:
        return TrackerState(x0)

    def step(self, state: TrackerState, obs: Observation, fs: FeasibleSet) -> TrackerState:
        raise NotImplementedError


class OPGDTracker(Tracker):
    name = "opgd"

    def step(self, state, obs, fs):
        return opgd_step(state, obs.gradient(state.x), fs, self.cfg)


class PerturbObserveTracker(Tracker):
    name = "po"

    def step(self, state, obs, fs):
        return po_step(state, obs.power(state.x), fs, self.cfg)


class ConstantVoltageTracker(Tracker):
    name = "constant"

    def initial_state(self, x0):
        return TrackerState(x0, setpoint=self.cfg.constant_setpoint)

    def step(self, state, obs, fs):
        return constant_voltage_step(state, fs)


class OracleTracker(Tracker):
    """Jumps straight to the constrained optimum; the zero-regret reference."""

    name = "oracle"

    def step(self, state, obs, fs):
        if not isinstance(obs, PlantObservation):
            raise TypeError("oracle tracker needs direct access to the plant")
        return replace(state, x=constrained_oracle(obs.model, obs.env, fs))


TRACKERS: dict[str, type[Tracker]] = {
    cls.name: cls for cls in (OPGDTracker, PerturbObserveTracker, ConstantVoltageTracker, OracleTracker)
}


def make_tracker(name: str, cfg: StepConfig | None = None) -> Tracker:
    try:
        return TRACKERS[name](cfg)
    except KeyError:
        raise ValueError(f"unknown tracker {name!r}; choose from {sorted(TRACKERS)}") from None
