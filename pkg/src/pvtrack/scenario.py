"""Time-indexed weather and directive sequences, plus their CSV format.

CSV layout (UTF-8)::

    # dt=0.1
    t,irradiance_wm2,temperature_c,mode,limit
    0,1000,25,MPPT,0

Numbers are written with 9 significant digits. Generated scenarios are
quantised to that precision on construction so save/load is exact.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constraints import ConstraintDirective, Mode
from .pvmodel import KELVIN_OFFSET, STC_TEMPERATURE, Environment

DEFAULT_STEP_SECONDS = 0.1
WINDOW_STEPS = 20  # 2 s at the default step
IRRADIANCE_CEILING = 1200.0
HEADER = ["t", "irradiance_wm2", "temperature_c", "mode", "limit"]


class ScenarioError(ValueError):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _q(x: float) -> float:
    return float(_fmt(x))


def _q_kelvin(temp_k: float) -> float:
    # Survives the kelvin -> celsius text -> kelvin trip.
    return _q(temp_k - KELVIN_OFFSET) + KELVIN_OFFSET


@dataclass(frozen=True)
class Sample:
    time_index: int
    env: Environment
    directive: ConstraintDirective = field(default_factory=ConstraintDirective)


@dataclass(frozen=True)
class Scenario:
    samples: tuple[Sample, ...]
    step_seconds: float = DEFAULT_STEP_SECONDS

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.step_seconds > 0:
            raise ScenarioError(f"step_seconds must be > 0, got {self.step_seconds}")
        if not self.samples:
            raise ScenarioError("scenario has no samples")
        prev = -1
        for s in self.samples:
            if s.time_index < 0 or s.time_index <= prev:
                raise ScenarioError(f"time index {s.time_index} is not strictly increasing")
            prev = s.time_index

    @property
    def horizon(self) -> int:
        return len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def environments(self) -> list[Environment]:
        return [s.env for s in self.samples]

    @property
    def irradiance(self) -> np.ndarray:
        return np.array([s.env.irradiance for s in self.samples])

    def with_directives(self, directives: Sequence[ConstraintDirective]) -> Scenario:
        if len(directives) != len(self.samples):
            raise ScenarioError("need one directive per sample")
        samples = tuple(replace(s, directive=d) for s, d in zip(self.samples, directives))
        return replace(self, samples=samples)

    def unconstrained(self) -> Scenario:
        return self.with_directives([ConstraintDirective.mppt()] * self.horizon)


def static_scenario(
    horizon: int,
    env: Environment | None = None,
    directive: ConstraintDirective | None = None,
    step_seconds: float = DEFAULT_STEP_SECONDS,
) -> Scenario:
    env = env or Environment(1000.0, STC_TEMPERATURE)
    directive = directive or ConstraintDirective.mppt()
    return Scenario(tuple(Sample(t, env, directive) for t in range(horizon)), step_seconds)


@dataclass(frozen=True)
class FluctuationSpec:
    """Parameters of the bounded random-walk irradiance generator.

    ``max_step_change`` bounds ``|G[j] - G[i]|`` for any two samples at most
    ``window_steps`` apart. ``events`` maps a step index to a requested jump
    (W/m^2), trimmed to whatever the window budget still allows.
    """

    base_irradiance: float = 1000.0
    max_step_change: float = 80.0
    temperature_profile: tuple[float, ...] = (STC_TEMPERATURE,)
    seed: int = 42
    window_steps: int = WINDOW_STEPS
    step_seconds: float = DEFAULT_STEP_SECONDS
    events: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.base_irradiance >= self.max_step_change >= 0:
            raise ScenarioError("need base_irradiance >= max_step_change >= 0")
        if not self.temperature_profile or min(self.temperature_profile) <= 0:
            raise ScenarioError("temperature_profile must be non-empty and in kelvin")
        if self.window_steps < 1:
            raise ScenarioError("window_steps must be >= 1")


def _temperature_at(profile: Sequence[float], t: int, horizon: int) -> float:
    k = min(t * len(profile) // horizon, len(profile) - 1)
    return profile[k]


def generate_fluctuating(spec: FluctuationSpec, horizon: int) -> Scenario:
    """Seeded irradiance walk that never moves more than ``max_step_change`` per window."""
    if horizon <= 0:
        raise ScenarioError("horizon must be positive")
    rng = np.random.default_rng(spec.seed)
    events = dict(spec.events)
    budget = spec.max_step_change
    # Typical per-step drift uses a quarter of the window budget; the window
    # limiter below clips whenever the walk would overspend it.
    stride = budget / 4.0
    draws = rng.uniform(-stride, stride, size=horizon)

    g = [_q(min(max(spec.base_irradiance, 0.0), IRRADIANCE_CEILING))]
    for t in range(1, horizon):
        cand = g[-1] + draws[t] + events.get(t, 0.0)
        window = g[max(0, t - spec.window_steps):]
        lo = max(max(window) - budget, 0.0)
        hi = min(min(window) + budget, IRRADIANCE_CEILING)
        val = _q(min(max(cand, lo), hi))
        # Rounding to 9 digits can overshoot the budget by a hair; walk back
        # toward the previous sample, which is always admissible.
        while max(window) - val > budget or val - min(window) > budget:
            step = 1e-6 * max(1.0, abs(val))
            if abs(g[-1] - val) <= step:
                val = g[-1]
                break
            val = _q(val + math.copysign(step, g[-1] - val))
        g.append(val)

    samples = tuple(
        Sample(
            t,
            Environment(g[t], _q_kelvin(_temperature_at(spec.temperature_profile, t, horizon))),
            ConstraintDirective.mppt(),
        )
        for t in range(horizon)
    )
    return Scenario(samples, spec.step_seconds)


def cycle_directives(
    scenario: Scenario, directives: Sequence[ConstraintDirective], segment_steps: int
) -> Scenario:
    """Assign ``directives`` in round-robin segments of ``segment_steps`` samples."""
    if segment_steps <= 0 or not directives:
        raise ScenarioError("need a positive segment length and at least one directive")
    seq = [directives[(t // segment_steps) % len(directives)] for t in range(scenario.horizon)]
    return scenario.with_directives(seq)


def save_scenario(s: Scenario, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# dt={_fmt(s.step_seconds)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for smp in s.samples:
            d = smp.directive
            w.writerow(
                [
                    smp.time_index,
                    _fmt(smp.env.irradiance),
                    _fmt(smp.env.temperature - KELVIN_OFFSET),
                    d.mode.value,
                    _fmt(d.limit) if d.mode is not Mode.MPPT else "0",
                ]
            )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    dt = DEFAULT_STEP_SECONDS
    rows: list[tuple[int, list[str]]] = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if text.startswith("#"):
            body = text[1:].strip()
            if body.startswith("dt="):
                try:
                    dt = float(body[3:])
                except ValueError:
                    raise ScenarioParseError(lineno, f"bad step size {body[3:]!r}") from None
            continue
        fields = next(csv.reader([text]))
        if not header_seen:
            if [f.strip() for f in fields] != HEADER:
                raise ScenarioParseError(lineno, f"expected header {','.join(HEADER)}")
            header_seen = True
            continue
        rows.append((lineno, fields))
    if not rows:
        raise ScenarioError(f"{path}: no data rows")

    samples = []
    prev_t = -1
    for lineno, fields in rows:
        if len(fields) != len(HEADER):
            raise ScenarioParseError(lineno, f"expected {len(HEADER)} columns, got {len(fields)}")
        t_raw, g_raw, c_raw, mode_raw, lim_raw = (f.strip() for f in fields)
        try:
            t = int(t_raw)
            g = float(g_raw)
            temp_c = float(c_raw)
            limit = float(lim_raw)
        except ValueError:
            raise ScenarioParseError(lineno, "non-numeric field") from None
        if t <= prev_t or t < 0:
            raise ScenarioParseError(lineno, f"time index {t} not strictly increasing")
        prev_t = t
        try:
            mode = Mode(mode_raw)
        except ValueError:
            raise ScenarioParseError(lineno, f"unknown directive {mode_raw!r}") from None
        try:
            env = Environment(g, temp_c + KELVIN_OFFSET)
            directive = ConstraintDirective(mode, limit)
        except ValueError as exc:
            raise ScenarioParseError(lineno, str(exc)) from None
        samples.append(Sample(t, env, directive))
    try:
        return Scenario(tuple(samples), dt)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
