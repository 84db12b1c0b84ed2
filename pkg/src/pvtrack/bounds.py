"""Empirical curvature/variability constants and the regret inequalities they imply.

The cost ``-P`` is not globally Lipschitz, so every constant is taken over
the feasible intervals a run actually used. Because the cost's gradient and
curvature are both increasing in voltage, a grid that contains the interval
end points recovers the exact extremes; the grid spacing only matters for
the reported sampling.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .constraints import FeasibleSet
from .metrics import RunSummary, StepRecord, constrained_oracle
from .pvmodel import Environment, PlantModel
from .scenario import Scenario

SLACK = 1e-9
GRID_STEP = 1e-3
TAIL_FRACTION = 0.2


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexityConstants:
    mu: float
    lipschitz_l: float
    grad_bound_g: float
    variability_v: float
    feasibility_d: float

    def __post_init__(self) -> None:
        if not 0.0 < self.mu <= self.lipschitz_l:
            raise BoundsError(f"need 0 < mu <= L, got mu={self.mu}, L={self.lipschitz_l}")
        if self.grad_bound_g < 0 or self.variability_v < 0:
            raise BoundsError("G and V must be non-negative")
        if not math.isfinite(self.feasibility_d):
            raise BoundsError("D must be finite")

    @property
    def optimal_step(self) -> float:
        """Step size ``2/(L+mu)`` that minimises the contraction factor."""
        return 2.0 / (self.lipschitz_l + self.mu)

    @property
    def contraction(self) -> float:
        return (self.lipschitz_l - self.mu) / (self.lipschitz_l + self.mu)

    @property
    def tail_regret_limit(self) -> float:
        L, mu, V = self.lipschitz_l, self.mu, self.variability_v
        return L * V**2 * (L + mu) ** 2 / (8.0 * mu**2)

    @property
    def drift_limit(self) -> float:
        return self.variability_v / self.mu

    def to_json(self) -> dict:
        return asdict(self)


def _grad(model: PlantModel, env: Environment, v):
    # Closed form without the [0, Voc] domain check: optimisers of one step
    # are evaluated under the next step's cost.
    vt = model.thermal_voltage(env)
    return -model.light_current(env) + model.diode.saturation_current * np.exp(v / vt) * (1.0 + v / vt)


def _curv(model: PlantModel, env: Environment, v):
    vt = model.thermal_voltage(env)
    return model.diode.saturation_current * np.exp(v / vt) * (2.0 / vt + v / vt**2)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(int(math.ceil((hi - lo) / step)), 1)
    return np.linspace(lo, hi, n + 1)


def estimate_constants(
    model: PlantModel,
    scenario: Scenario,
    domains: Sequence[FeasibleSet],
    trajectory: Sequence[np.ndarray] | None = None,
    grid_step: float = GRID_STEP,
) -> ConvexityConstants:
    """Estimate (mu, L, G, V, D) over the per-step feasible boxes.

    ``trajectory`` holds the scored iterates ``x_t``; without it ``D`` falls
    back to the worst distance from ``x_t*`` to any point of ``X_{t+1}``.
    """
    if len(domains) != scenario.horizon:
        raise BoundsError("need one feasible set per scenario step")
    mu, L, g2max = math.inf, 0.0, 0.0
    cache: dict[tuple, tuple[float, float, float]] = {}
    for smp, fs in zip(scenario, domains):
        if smp.env.irradiance == 0.0:
            continue
        sq = 0.0
        for lo, hi in zip(fs.lower, fs.upper):
            if hi <= lo:
                continue
            key = (smp.env, float(lo), float(hi))
            if key not in cache:
                v = _grid(lo, hi, grid_step)
                h = _curv(model, smp.env, v)
                cache[key] = (float(h.min()), float(h.max()), float(np.max(_grad(model, smp.env, v) ** 2)))
            hmin, hmax, gsq = cache[key]
            mu, L = min(mu, hmin), max(L, hmax)
            sq += gsq
        g2max = max(g2max, sq)
    if not math.isfinite(mu):
        raise BoundsError("every domain is degenerate; constants are undefined")

    stars = [constrained_oracle(model, s.env, fs) for s, fs in zip(scenario, domains)]
    V = 0.0
    for t in range(scenario.horizon - 1):
        x_next = stars[t + 1]
        diff = _grad(model, scenario[t + 1].env, x_next) - _grad(model, scenario[t].env, x_next)
        V = max(V, float(np.linalg.norm(diff)))

    D = 0.0
    for t in range(scenario.horizon - 1):
        if trajectory is not None:
            D = max(D, float(np.linalg.norm(np.asarray(trajectory[t + 1]) - stars[t])))
        else:
            far = np.maximum(np.abs(domains[t + 1].lower - stars[t]), np.abs(domains[t + 1].upper - stars[t]))
            D = max(D, float(np.linalg.norm(far)))
    return ConvexityConstants(mu, L, math.sqrt(g2max), V, D)


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs <= 0 else math.inf


def _finalize(name: str, ratios: list[tuple[int, float]], violations: list[int], **extra) -> dict:
    worst_t, worst = max(ratios, key=lambda p: p[1]) if ratios else (None, 0.0)
    return {
        "inequality": name,
        "pass": not violations,
        "checked": len(ratios),
        "worst_ratio": worst,
        "worst_step": worst_t,
        "violations": violations,
        **extra,
    }


def check_unconstrained_bounds(run: RunSummary, c: ConvexityConstants) -> dict:
    """Per-step quadratic regret bound, plus the asymptotic bound when applicable.

    The asymptotic bound is only claimed for the step size ``2/(L+mu)``; for
    any other step size it is reported as skipped.
    """
    if run.constrained:
        raise BoundsError("unconstrained bounds need a run without active directives")
    L = c.lipschitz_l
    ratios, bad = [], []
    for r in run.records:
        rhs = 0.5 * L * r.error**2
        ratios.append((r.t, _ratio(r.phi, rhs)))
        if r.phi > rhs + SLACK:
            bad.append(r.t)
    eq5 = _finalize("quadratic_regret", ratios, bad)

    limit = c.tail_regret_limit
    applicable = run.alpha is not None and math.isclose(run.alpha, c.optimal_step, rel_tol=1e-9)
    tail = run.records[int(math.floor((1.0 - TAIL_FRACTION) * run.horizon)) :]
    if applicable:
        t_ratios = [(r.t, _ratio(r.phi, limit)) for r in tail]
        t_bad = [r.t for r in tail if r.phi > limit + SLACK]
        eq6 = _finalize("tail_regret", t_ratios, t_bad, limit=limit, skipped=False)
    else:
        eq6 = _finalize("tail_regret", [], [], limit=limit, skipped=True,
                        reason="run step size differs from 2/(L+mu)")
    return {"quadratic_regret": eq5, "tail_regret": eq6}


def optimizer_drift(model: PlantModel, scenario: Scenario, domains: Sequence[FeasibleSet]) -> np.ndarray:
    stars = [constrained_oracle(model, s.env, fs) for s, fs in zip(scenario, domains)]
    return np.array([np.linalg.norm(stars[t + 1] - stars[t]) for t in range(len(stars) - 1)])


def check_variability_bound(
    model: PlantModel, scenario: Scenario, domains: Sequence[FeasibleSet], c: ConvexityConstants
) -> dict:
    """Consecutive optimisers may move at most ``V/mu`` apart."""
    limit = c.drift_limit
    drift = optimizer_drift(model, scenario, domains)
    ratios, bad = [], []
    for k, d in enumerate(drift):
        t = scenario[k + 1].time_index
        ratios.append((t, _ratio(float(d), limit)))
        if d > limit + SLACK:
            bad.append(t)
    return _finalize("optimizer_drift", ratios, bad, limit=limit)


def check_gradient_bound(
    model: PlantModel,
    scenario: Scenario,
    domains: Sequence[FeasibleSet],
    c: ConvexityConstants,
    samples: int = 1000,
    seed: int = 0,
) -> dict:
    """``||grad f_t(x)|| <= G`` on random feasible points."""
    rng = np.random.default_rng(seed)
    ratios, bad = [], []
    for _ in range(samples):
        k = int(rng.integers(scenario.horizon))
        fs = domains[k]
        x = rng.uniform(fs.lower, fs.upper)
        g = float(np.linalg.norm(_grad(model, scenario[k].env, x)))
        ratios.append((scenario[k].time_index, _ratio(g, c.grad_bound_g)))
        if g > c.grad_bound_g + SLACK:
            bad.append(scenario[k].time_index)
    return _finalize("gradient_bound", ratios, bad, limit=c.grad_bound_g)


def check_feasibility_radius(run: RunSummary, c: ConvexityConstants) -> dict:
    """``||x_{t+1} - x_t*|| <= D`` along the run."""
    recs: Sequence[StepRecord] = run.records
    ratios, bad = [], []
    for prev, cur in zip(recs, recs[1:]):
        d = float(np.linalg.norm(cur.x - prev.x_star))
        ratios.append((cur.t, _ratio(d, c.feasibility_d)))
        if d > c.feasibility_d + SLACK:
            bad.append(cur.t)
    return _finalize("feasibility_radius", ratios, bad, limit=c.feasibility_d)


def bound_report(
    model: PlantModel, scenario: Scenario, run: RunSummary, c: ConvexityConstants | None = None
) -> dict:
    """Every applicable check for ``run``, ready for JSON."""
    domains = run.domains
    if c is None:
        c = estimate_constants(model, scenario, domains, [r.x for r in run.records])
    report = {"constants": c.to_json(), "tracker": run.tracker, "alpha": run.alpha}
    checks = {}
    if run.constrained:
        checks["quadratic_regret"] = {"inequality": "quadratic_regret", "skipped": True,
                                      "reason": "run has constrained steps"}
        checks["tail_regret"] = {"inequality": "tail_regret", "skipped": True,
                                 "reason": "run has constrained steps"}
    else:
        checks.update(check_unconstrained_bounds(run, c))
    checks["optimizer_drift"] = check_variability_bound(model, scenario, domains, c)
    checks["gradient_bound"] = check_gradient_bound(model, scenario, domains, c)
    checks["feasibility_radius"] = check_feasibility_radius(run, c)
    report["checks"] = checks
    report["pass"] = all(v.get("pass", True) for v in checks.values())
    return report

