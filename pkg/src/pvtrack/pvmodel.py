"""Single-diode PV module model.

Per-module power follows ``P(V) = V*I_L - V*I_o*exp(V/V_t)`` with no series
or shunt resistance. ``I_L`` scales linearly with irradiance and ``V_t``
linearly with absolute temperature; ``I_o`` is held fixed.

The optimisation convention used throughout the package is *minimisation* of
the cost ``f(V) = -P(V)``, so ``cost_gradient`` returns ``dP/dV`` negated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

STC_IRRADIANCE = 1000.0  # W/m^2
STC_TEMPERATURE = 298.15  # K
KELVIN_OFFSET = 273.15

# Slack allowed when checking that a voltage sits inside [0, Voc].
DOMAIN_TOL = 1e-9


class DomainError(ValueError):
    """Voltage outside the physical operating range [0, Voc(env)]."""


class FitError(ValueError):
    """Datasheet values cannot be reproduced by the diode model."""


@dataclass(frozen=True)
class ModuleDatasheet:
    """Module characteristics at Standard Test Conditions."""

    open_circuit_voltage: float
    short_circuit_current: float
    mpp_voltage: float
    mpp_current: float
    mpp_power: float

    def validate(self) -> None:
        if not 0.0 < self.mpp_voltage < self.open_circuit_voltage:
            raise FitError(
                f"need 0 < mpp_voltage < open_circuit_voltage, got "
                f"{self.mpp_voltage} and {self.open_circuit_voltage}"
            )
        if not 0.0 < self.mpp_current < self.short_circuit_current:
            raise FitError(
                f"need 0 < mpp_current < short_circuit_current, got "
                f"{self.mpp_current} and {self.short_circuit_current}"
            )
        if abs(self.mpp_power - self.mpp_voltage * self.mpp_current) > 0.005 * self.mpp_power:
            raise FitError("mpp_power disagrees with mpp_voltage * mpp_current by more than 0.5%")


# Datasheet values of the 8-module reference plant.
REFERENCE_DATASHEET = ModuleDatasheet(
    open_circuit_voltage=36.3,
    short_circuit_current=7.84,
    mpp_voltage=29.2,
    mpp_current=7.3,
    mpp_power=213.15,
)
REFERENCE_MODULE_COUNT = 8


@dataclass(frozen=True)
class DiodeParams:
    light_current_stc: float
    saturation_current: float
    thermal_voltage_stc: float

    def __post_init__(self) -> None:
        if min(self.light_current_stc, self.saturation_current, self.thermal_voltage_stc) <= 0:
            raise ValueError("diode parameters must be strictly positive")
        if self.saturation_current >= 1e-3 * self.light_current_stc:
            raise ValueError("saturation current must be below 1e-3 of the light current")


@dataclass(frozen=True)
class Environment:
    """Irradiance in W/m^2 and module temperature in kelvin."""

    irradiance: float
    temperature: float = STC_TEMPERATURE

    def __post_init__(self) -> None:
        if not (self.irradiance >= 0.0 and math.isfinite(self.irradiance)):
            raise ValueError(f"irradiance must be >= 0, got {self.irradiance}")
        if not (self.temperature > 0.0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be > 0 K, got {self.temperature}")

    @classmethod
    def from_celsius(cls, irradiance: float, temperature_c: float) -> Environment:
        return cls(irradiance, temperature_c + KELVIN_OFFSET)


STC = Environment(STC_IRRADIANCE, STC_TEMPERATURE)


def fit_diode_params(sheet: ModuleDatasheet) -> DiodeParams:
    """Fit ``(I_L, I_o, V_t)`` so the current law passes through Voc and the MPP.

    ``I_L`` is the short-circuit current. Eliminating ``I_o`` through
    ``I(Voc) = 0`` leaves a scalar equation in ``V_t``, solved by bisection on
    [0.5, 10] V.
    """
    sheet.validate()
    i_l = sheet.short_circuit_current
    voc = sheet.open_circuit_voltage
    vmp = sheet.mpp_voltage
    imp = sheet.mpp_current

    def residual(vt: float) -> float:
        return i_l * (1.0 - math.exp((vmp - voc) / vt)) - imp

    lo, hi = 0.5, 10.0
    if residual(lo) * residual(hi) > 0:
        raise FitError("no thermal voltage in [0.5, 10] V reproduces the datasheet")
    vt = bisect(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    i_o = i_l * math.exp(-voc / vt)
    return DiodeParams(light_current_stc=i_l, saturation_current=i_o, thermal_voltage_stc=vt)


@dataclass(frozen=True)
class PlantModel:
    diode: DiodeParams
    module_count: int = REFERENCE_MODULE_COUNT
    datasheet: ModuleDatasheet = REFERENCE_DATASHEET

    def __post_init__(self) -> None:
        if self.module_count < 1:
            raise ValueError("module_count must be >= 1")

    @classmethod
    def from_datasheet(
        cls, sheet: ModuleDatasheet = REFERENCE_DATASHEET, module_count: int = REFERENCE_MODULE_COUNT
    ) -> PlantModel:
        model = cls(fit_diode_params(sheet), module_count, sheet)
        p = float(power(model, STC, sheet.mpp_voltage))
        if abs(p - sheet.mpp_power) > 0.005 * sheet.mpp_power:
            raise FitError(f"fitted model gives {p:.3f} W at the datasheet MPP voltage")
        return model

    def light_current(self, env: Environment) -> float:
        return self.diode.light_current_stc * env.irradiance / STC_IRRADIANCE

    def thermal_voltage(self, env: Environment) -> float:
        return self.diode.thermal_voltage_stc * env.temperature / STC_TEMPERATURE


def reference_plant(module_count: int = REFERENCE_MODULE_COUNT) -> PlantModel:
    return PlantModel.from_datasheet(REFERENCE_DATASHEET, module_count)


def voc_at(model: PlantModel, env: Environment) -> float:
    """Open-circuit voltage; 0 for a dark module."""
    i_l = model.light_current(env)
    i_o = model.diode.saturation_current
    if i_l <= i_o:
        return 0.0
    return model.thermal_voltage(env) * math.log(i_l / i_o)


def _check_domain(model: PlantModel, env: Environment, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    voc = voc_at(model, env)
    if np.any(~np.isfinite(v)) or np.any(v < -DOMAIN_TOL) or np.any(v > voc + DOMAIN_TOL):
        raise DomainError(f"voltage outside [0, {voc:.6f}] V")
    return v


def current(model: PlantModel, env: Environment, v):
    """Module current ``I_L - I_o*exp(V/V_t)``; no domain check."""
    v = np.asarray(v, dtype=float)
    return model.light_current(env) - model.diode.saturation_current * np.exp(v / model.thermal_voltage(env))


def power(model: PlantModel, env: Environment, v):
    """Per-module power at voltage ``v`` (scalar or array of module voltages)."""
    v = _check_domain(model, env, v)
    vt = model.thermal_voltage(env)
    p = v * model.light_current(env) - v * model.diode.saturation_current * np.exp(v / vt)
    return p if p.ndim else float(p)


def array_power(model: PlantModel, env: Environment, x) -> float:
    """Total power of the decision vector ``x`` (one voltage per module)."""
    return float(np.sum(power(model, env, x)))


def cost_gradient(model: PlantModel, env: Environment, v):
    """Derivative of ``-P`` with respect to voltage."""
    v = _check_domain(model, env, v)
    vt = model.thermal_voltage(env)
    g = -model.light_current(env) + model.diode.saturation_current * np.exp(v / vt) * (1.0 + v / vt)
    return g if g.ndim else float(g)


def cost_curvature(model: PlantModel, env: Environment, v):
    """Second derivative of ``-P``; positive for every v >= 0."""
    v = np.asarray(v, dtype=float)
    vt = model.thermal_voltage(env)
    h = model.diode.saturation_current * np.exp(v / vt) * (2.0 / vt + v / vt**2)
    return h if h.ndim else float(h)


def mpp_oracle(model: PlantModel, env: Environment) -> tuple[float, float]:
    """Return ``(voltage, power)`` of the per-module maximum power point.

    Newton iteration on the cost gradient, kept inside a shrinking sign-change
    bracket; a step that leaves the bracket falls back to bisection.
    """
    voc = voc_at(model, env)
    if voc == 0.0:
        return 0.0, 0.0
    vt = model.thermal_voltage(env)
    i_l = model.light_current(env)
    i_o = model.diode.saturation_current

    def grad(v: float) -> float:
        return -i_l + i_o * math.exp(v / vt) * (1.0 + v / vt)

    def curv(v: float) -> float:
        return i_o * math.exp(v / vt) * (2.0 / vt + v / vt**2)

    # grad(0) < 0 < grad(voc) whenever voc > 0.
    lo, hi = 0.0, voc
    v = voc - vt  # close to the knee for typical modules
    for _ in range(200):
        g = grad(v)
        if g == 0.0:
            break
        if g < 0.0:
            lo = v
        else:
            hi = v
        step = g / curv(v)
        v_new = v - step
        if not lo < v_new < hi:
            v_new = 0.5 * (lo + hi)
        if abs(v_new - v) <= 1e-14 * max(1.0, abs(v)) or hi - lo <= 1e-14:
            v = v_new
            break
        v = v_new
    return v, float(power(model, env, v))
