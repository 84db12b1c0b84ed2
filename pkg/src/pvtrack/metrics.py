"""Tracking error, regret and run summaries.

Costs are negated array power in watts, so every regret below reads as
watts of power given up.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import FeasibleSet, Mode
from .pvmodel import Environment, PlantModel, mpp_oracle

# Oracle optimality is only checked up to float noise.
REGRET_TOL = 1e-9

STEPS_HEADER = ["t", "x", "x_star", "power_w", "phi_w", "mode", "cv_power_w", "lower_v", "upper_v"]


class MetricsError(ValueError):
    pass


def constrained_oracle(model: PlantModel, env: Environment, fs: FeasibleSet) -> np.ndarray:
    """Minimiser of the cost over the box: the MPP voltage clamped per module."""
    v_mpp, _ = mpp_oracle(model, env)
    return np.clip(np.full(len(fs), v_mpp), fs.lower, fs.upper)


def tracking_error(x, x_star) -> float:
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise MetricsError(f"shape mismatch {x.shape} vs {x_star.shape}")
    return float(np.linalg.norm(x - x_star))


def instantaneous_regret(f_x: float, f_star: float) -> float:
    return f_x - f_star


@dataclass(frozen=True, eq=False)
class StepRecord:
    t: int
    x: np.ndarray
    x_star: np.ndarray
    f_x: float
    f_star: float
    power_out: float
    mode: Mode = Mode.MPPT
    lower: float = 0.0
    upper: float = 0.0
    f_cv: float = math.nan  # cost of the fixed-voltage comparator at this step

    @property
    def phi(self) -> float:
        return instantaneous_regret(self.f_x, self.f_star)

    @property
    def error(self) -> float:
        return tracking_error(self.x, self.x_star)

    def check(self) -> None:
        if self.f_x < self.f_star - REGRET_TOL:
            raise MetricsError(f"step {self.t}: cost {self.f_x} below oracle cost {self.f_star}")


@dataclass(frozen=True, eq=False)
class RunSummary:
    tracker: str
    horizon: int
    dt: float
    avg_dynamic_regret_w: float
    static_regret_w: float
    final_tracking_error_v: float
    cumulative_dynamic_regret_w: float
    energy_loss_j: float
    alpha: float | None = None
    records: tuple[StepRecord, ...] = field(default=(), repr=False)

    @property
    def phis(self) -> np.ndarray:
        return np.array([r.phi for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def domains(self) -> list[FeasibleSet]:
        return [FeasibleSet.uniform(r.lower, r.upper, r.x.size) for r in self.records]

    @property
    def constrained(self) -> bool:
        return any(r.mode is not Mode.MPPT for r in self.records)

    def to_json(self) -> dict:
        return {
            "tracker": self.tracker,
            "horizon": self.horizon,
            "dt": self.dt,
            "alpha": self.alpha,
            "avg_dynamic_regret_w": self.avg_dynamic_regret_w,
            "static_regret_w": self.static_regret_w,
            "final_tracking_error_v": self.final_tracking_error_v,
            "cumulative_dynamic_regret_w": self.cumulative_dynamic_regret_w,
            "energy_loss_j": self.energy_loss_j,
        }


def summarize(
    records: Sequence[StepRecord], *, tracker: str = "", dt: float = 0.1, alpha: float | None = None
) -> RunSummary:
    """Aggregate per-step records.

    Static regret compares the tracker's average cost with the fixed-voltage
    comparator's average cost, so each record must carry ``f_cv``.
    """
    if not records:
        raise MetricsError("cannot summarise an empty run")
    T = len(records)
    phis = [r.phi for r in records]
    total = math.fsum(phis)
    f_avg = math.fsum(r.f_x for r in records) / T
    cv_avg = math.fsum(r.f_cv for r in records) / T
    return RunSummary(
        tracker=tracker,
        horizon=T,
        dt=dt,
        avg_dynamic_regret_w=total / T,
        static_regret_w=f_avg - cv_avg,
        final_tracking_error_v=records[-1].error,
        cumulative_dynamic_regret_w=total,
        energy_loss_j=math.fsum(p * dt for p in phis),
        alpha=alpha,
        records=tuple(records),
    )


def _fmt_vec(x: np.ndarray) -> str:
    # Uniform vectors collapse to one number; otherwise ';'-separated.
    if np.all(x == x[0]):
        return repr(float(x[0]))
    return ";".join(repr(float(v)) for v in x)


def _parse_vec(text: str, n: int) -> np.ndarray:
    vals = [float(v) for v in text.split(";")]
    return np.full(n, vals[0]) if len(vals) == 1 else np.array(vals)


def write_steps_csv(summary: RunSummary, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEPS_HEADER)
        for r in summary.records:
            w.writerow(
                [
                    r.t,
                    _fmt_vec(r.x),
                    _fmt_vec(r.x_star),
                    repr(r.power_out),
                    repr(r.phi),
                    r.mode.value,
                    repr(-r.f_cv),
                    repr(r.lower),
                    repr(r.upper),
                ]
            )


def read_steps_csv(path: str | Path, module_count: int) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "t": int(row["t"]),
                    "x": _parse_vec(row["x"], module_count),
                    "x_star": _parse_vec(row["x_star"], module_count),
                    "power_w": float(row["power_w"]),
                    "phi_w": float(row["phi_w"]),
                    "mode": Mode(row["mode"]),
                    "cv_power_w": float(row["cv_power_w"]),
                    "lower_v": float(row["lower_v"]),
                    "upper_v": float(row["upper_v"]),
                }
            )
    return rows


def recompute_from_steps(rows: Sequence[dict], dt: float) -> dict:
    """Independent re-aggregation of a steps CSV, for consistency checks."""
    T = len(rows)
    total = math.fsum(r["phi_w"] for r in rows)
    return {
        "horizon": T,
        "avg_dynamic_regret_w": total / T,
        "static_regret_w": (math.fsum(r["cv_power_w"] for r in rows) - math.fsum(r["power_w"] for r in rows)) / T,
        "final_tracking_error_v": float(np.linalg.norm(rows[-1]["x"] - rows[-1]["x_star"])),
        "cumulative_dynamic_regret_w": total,
        "energy_loss_j": total * dt,
    }


def records_from_steps(rows: Sequence[dict]) -> list[StepRecord]:
    """Rebuild step records from a parsed steps CSV."""
    out = []
    for r in rows:
        f_x = -r["power_w"]
        out.append(
            StepRecord(
                t=r["t"],
                x=r["x"],
                x_star=r["x_star"],
                f_x=f_x,
                f_star=f_x - r["phi_w"],
                power_out=r["power_w"],
                mode=r["mode"],
                lower=r["lower_v"],
                upper=r["upper_v"],
                f_cv=-r["cv_power_w"],
            )
        )
    return out


def write_summary_json(summary: RunSummary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
