"""The per-step simulation loop and the default experiments.

At step ``t`` the directive is realised into ``X_t``, the tracker observes
the plant under ``env_t`` at its previous operating point and moves to a new
point inside ``X_t``. That point is the one scored against the oracle for
step ``t``, so every scored iterate is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import estimate_constants
from .constraints import ConstraintDirective, FeasibleSet, realize
from .metrics import REGRET_TOL, RunSummary, StepRecord, constrained_oracle, summarize
from .pvmodel import STC, PlantModel, array_power, voc_at
from .scenario import FluctuationSpec, Scenario, cycle_directives, generate_fluctuating
from .trackers import ConstantVoltageTracker, PlantObservation, StepConfig, Tracker, TrackerState, duty_cycle

DEFAULT_HORIZON = 600
DEFAULT_SEED = 42
# Warm-up from 25 C toward typical operating cell temperatures.
DEFAULT_TEMPERATURES_C = (25.0, 35.0, 45.0)
DEFAULT_BUS_VOLTAGE = 48.0
DEFAULT_SEGMENT_STEPS = 50


class SimulationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def default_fluctuation_spec(seed: int = DEFAULT_SEED) -> FluctuationSpec:
    return FluctuationSpec(
        base_irradiance=1000.0,
        max_step_change=80.0,
        temperature_profile=tuple(c + 273.15 for c in DEFAULT_TEMPERATURES_C),
        seed=seed,
    )


def default_constraint_cycle(module_count: int = 8) -> list[ConstraintDirective]:
    """MPPT, over-voltage protection and active power control, in turn."""
    return [
        ConstraintDirective.mppt(),
        ConstraintDirective.voltage_max(29.5),
        ConstraintDirective.mppt(),
        ConstraintDirective.absolute_power(220.0 * module_count),
    ]


def default_scenario(
    constrained: bool = False, seed: int = DEFAULT_SEED, horizon: int = DEFAULT_HORIZON, module_count: int = 8
) -> Scenario:
    s = generate_fluctuating(default_fluctuation_spec(seed), horizon)
    if constrained:
        s = cycle_directives(s, default_constraint_cycle(module_count), DEFAULT_SEGMENT_STEPS)
    return s


def default_x0(model: PlantModel) -> np.ndarray:
    return np.full(model.module_count, 0.8 * voc_at(model, STC))


@dataclass(frozen=True)
class _Trace:
    xs: list[np.ndarray]
    sets: list[FeasibleSet]
    powers: list[float]


def _trace(model: PlantModel, scenario: Scenario, tracker: Tracker, x0: np.ndarray) -> _Trace:
    dt = scenario.step_seconds
    state: TrackerState = tracker.initial_state(x0)
    xs, sets, powers = [], [], []
    prev_power = None
    for smp in scenario:
        env = smp.env
        voc = voc_at(model, env)
        # The array cannot sit above its open-circuit voltage.
        state = TrackerState(
            np.clip(state.x, 0.0, voc), state.last_power, state.direction, state.setpoint
        )
        obs = PlantObservation(model, env)
        if prev_power is None:
            prev_power = obs.power(state.x)
        fs = realize(smp.directive, model, env, prev_power, dt)
        try:
            state = tracker.step(state, obs, fs)
        except ValueError as exc:
            raise SimulationError(smp.time_index, str(exc)) from exc
        if not fs.contains(state.x):
            raise SimulationError(smp.time_index, f"{tracker.name} left the feasible set")
        p = obs.power(state.x)
        xs.append(state.x)
        sets.append(fs)
        powers.append(p)
        prev_power = p
    return _Trace(xs, sets, powers)


def run_simulation(
    model: PlantModel,
    scenario: Scenario,
    tracker: Tracker,
    *,
    x0: np.ndarray | None = None,
    static_setpoint: float | None = None,
) -> RunSummary:
    """Run ``tracker`` over ``scenario`` and score it step by step.

    The fixed-voltage comparator for static regret is replayed separately on
    the same scenario with its own feasible sets.
    """
    x0 = default_x0(model) if x0 is None else np.asarray(x0, dtype=float)
    trace = _trace(model, scenario, tracker, x0)
    setpoint = tracker.cfg.constant_setpoint if static_setpoint is None else static_setpoint
    cv_cfg = StepConfig(
        opgd_step_size=tracker.cfg.opgd_step_size, po_perturb=tracker.cfg.po_perturb, constant_setpoint=setpoint
    )
    comparator = _trace(model, scenario, ConstantVoltageTracker(cv_cfg), x0)

    records = []
    for k, smp in enumerate(scenario):
        fs = trace.sets[k]
        x_star = constrained_oracle(model, smp.env, fs)
        f_star = -array_power(model, smp.env, x_star)
        rec = StepRecord(
            t=smp.time_index,
            x=trace.xs[k],
            x_star=x_star,
            f_x=-trace.powers[k],
            f_star=f_star,
            power_out=trace.powers[k],
            mode=smp.directive.mode,
            lower=float(fs.lower[0]),
            upper=float(fs.upper[0]),
            f_cv=-comparator.powers[k],
        )
        if rec.phi < -REGRET_TOL:
            raise SimulationError(smp.time_index, f"negative regret {rec.phi}")
        records.append(rec)
    alpha = tracker.cfg.opgd_step_size if tracker.name == "opgd" else None
    return summarize(records, tracker=tracker.name, dt=scenario.step_seconds, alpha=alpha)


def duty_cycles(summary: RunSummary, bus_voltage: float = DEFAULT_BUS_VOLTAGE) -> np.ndarray:
    """Converter duty cycle per step and module for an idealised buck stage."""
    return np.array([[duty_cycle(v, bus_voltage) for v in r.x] for r in summary.records])


def mppt_domains(model: PlantModel, scenario: Scenario) -> list[FeasibleSet]:
    """Unconstrained boxes ``[0, Voc]``; every realised set is a subset of these."""
    return [realize(ConstraintDirective.mppt(), model, s.env) for s in scenario]


def bound_optimal_step(model: PlantModel, scenario: Scenario) -> float:
    """``2/(L+mu)`` with curvature taken over the unconstrained boxes of ``scenario``."""
    return estimate_constants(model, scenario, mppt_domains(model, scenario)).optimal_step
