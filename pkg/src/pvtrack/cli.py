"""Command-line harness: generate scenarios, run trackers, compare, check bounds."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path


from .bounds import BoundsError, bound_report
from .metrics import (
    MetricsError,
    RunSummary,
    read_steps_csv,
    records_from_steps,
    summarize,
    write_steps_csv,
    write_summary_json,
)
from .pvmodel import REFERENCE_DATASHEET, FitError, ModuleDatasheet, PlantModel
from .scenario import (
    FluctuationSpec,
    Scenario,
    ScenarioError,
    cycle_directives,
    generate_fluctuating,
    load_scenario,
    save_scenario,
)
from .simulate import (
    DEFAULT_HORIZON,
    DEFAULT_SEED,
    DEFAULT_SEGMENT_STEPS,
    DEFAULT_TEMPERATURES_C,
    SimulationError,
    bound_optimal_step,
    default_constraint_cycle,
    default_scenario,
    default_x0,
    run_simulation,
)
from .trackers import TRACKERS, StepConfig, make_tracker

COMPARE_COLUMNS = ["tracker", "avg_dynamic_regret_w", "static_regret_w", "final_tracking_error_v"]


class CLIError(Exception):
    pass


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _scenario_from_args(args) -> Scenario:
    if args.scenario is not None:
        return load_scenario(args.scenario)
    return default_scenario(constrained=args.constrained, seed=args.seed, horizon=args.horizon, module_count=args.modules)


def _model_from_args(args) -> PlantModel:
    sheet = ModuleDatasheet(
        open_circuit_voltage=args.voc,
        short_circuit_current=args.isc,
        mpp_voltage=args.vmpp,
        mpp_current=args.impp,
        mpp_power=args.pmax,
    )
    return PlantModel.from_datasheet(sheet, args.modules)


def _step_config(args, model: PlantModel, scenario: Scenario) -> StepConfig:
    alpha = args.alpha
    if alpha == "optimal":
        alpha = bound_optimal_step(model, scenario)
    return StepConfig(opgd_step_size=float(alpha), po_perturb=args.perturb, constant_setpoint=args.setpoint)


def execute_run(model: PlantModel, scenario: Scenario, tracker_name: str, cfg: StepConfig, out: Path) -> RunSummary:
    """Run one tracker and write steps.csv, summary.json, bounds.json and the inputs."""
    out.mkdir(parents=True, exist_ok=True)
    x0 = default_x0(model)
    summary = run_simulation(model, scenario, make_tracker(tracker_name, cfg), x0=x0)
    save_scenario(scenario, out / "scenario.csv")
    _dump_json(
        {
            "tracker": tracker_name,
            "step": asdict(cfg),
            "modules": model.module_count,
            "datasheet": asdict(model.datasheet),
            "x0": [float(v) for v in x0],
        },
        out / "config.json",
    )
    write_steps_csv(summary, out / "steps.csv")
    write_summary_json(summary, out / "summary.json")
    _dump_json(bound_report(model, scenario, summary), out / "bounds.json")
    return summary


def load_run(run_dir: Path) -> tuple[PlantModel, Scenario, RunSummary]:
    cfg = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    model = PlantModel.from_datasheet(ModuleDatasheet(**cfg["datasheet"]), cfg["modules"])
    scenario = load_scenario(run_dir / "scenario.csv")
    rows = read_steps_csv(run_dir / "steps.csv", model.module_count)
    alpha = cfg["step"]["opgd_step_size"] if cfg["tracker"] == "opgd" else None
    summary = summarize(records_from_steps(rows), tracker=cfg["tracker"], dt=scenario.step_seconds, alpha=alpha)
    return model, scenario, summary


def format_table(summaries: list[RunSummary]) -> str:
    lines = [f"{'tracker':<10}{'avg dyn regret [W]':>20}{'static regret [W]':>20}{'final err [V]':>16}"]
    for s in summaries:
        lines.append(
            f"{s.tracker:<10}{s.avg_dynamic_regret_w:>20.4f}{s.static_regret_w:>20.4f}{s.final_tracking_error_v:>16.6f}"
        )
    return "\n".join(lines) + "\n"


def write_table_csv(summaries: list[RunSummary], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for s in summaries:
            w.writerow([s.tracker, repr(s.avg_dynamic_regret_w), repr(s.static_regret_w), repr(s.final_tracking_error_v)])


def compare_runs(model: PlantModel, scenario: Scenario, trackers: list[str], cfg: StepConfig, out: Path) -> list[RunSummary]:
    out.mkdir(parents=True, exist_ok=True)
    summaries = [execute_run(model, scenario, name, cfg, out / name) for name in trackers]
    (out / "table.txt").write_text(format_table(summaries), encoding="utf-8")
    write_table_csv(summaries, out / "table.csv")
    return summaries


PLOT_SCRIPT = '''"""Plot tracking error and instantaneous regret for the run directories given."""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np


def load(run_dir):
    with open(f"{run_dir}/steps.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([int(r["t"]) for r in rows])
    x = [np.array([float(v) for v in r["x"].split(";")]) for r in rows]
    xs = [np.array([float(v) for v in r["x_star"].split(";")]) for r in rows]
    n = max(max(len(a), len(b)) for a, b in zip(x, xs))
    err = np.array([np.linalg.norm(np.resize(a, n) - np.resize(b, n)) for a, b in zip(x, xs)])
    phi = np.array([float(r["phi_w"]) for r in rows])
    return t, err, phi


fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
for run_dir in sys.argv[1:]:
    t, err, phi = load(run_dir)
    ax1.plot(t, err, label=run_dir)
    ax2.plot(t, phi, label=run_dir)
ax1.set_ylabel("tracking error [V]")
ax2.set_ylabel("instantaneous regret [W]")
ax2.set_xlabel("step")
ax1.legend()
fig.tight_layout()
plt.savefig("tracking.png", dpi=150)
'''


def _add_plant_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("plant")
    g.add_argument("--modules", type=int, default=8)
    g.add_argument("--voc", type=float, default=REFERENCE_DATASHEET.open_circuit_voltage)
    g.add_argument("--isc", type=float, default=REFERENCE_DATASHEET.short_circuit_current)
    g.add_argument("--vmpp", type=float, default=REFERENCE_DATASHEET.mpp_voltage)
    g.add_argument("--impp", type=float, default=REFERENCE_DATASHEET.mpp_current)
    g.add_argument("--pmax", type=float, default=REFERENCE_DATASHEET.mpp_power)


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario (a file, or the default generated one)")
    g.add_argument("--scenario", type=Path, default=None, help="scenario CSV; omit to generate the default")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    g.add_argument("--constrained", action="store_true", help="cycle MPPT / VMAX / MPPT / ABS directives")


def _add_step_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tracker settings")
    g.add_argument("--alpha", default=0.2, help="OPGD step size, or 'optimal' for 2/(L+mu)")
    g.add_argument("--perturb", type=float, default=0.5, help="P&O perturbation [V]")
    g.add_argument("--setpoint", type=float, default=29.0, help="constant-voltage setpoint [V]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a fluctuating-irradiance scenario CSV")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--base", type=float, default=1000.0, help="starting irradiance [W/m^2]")
    p.add_argument("--max-change", type=float, default=80.0, help="max change per 2 s window [W/m^2]")
    p.add_argument("--temperatures", type=float, nargs="+", default=list(DEFAULT_TEMPERATURES_C),
                   help="piecewise-constant temperature profile [C]")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--constrained", action="store_true")
    p.add_argument("--modules", type=int, default=8, help="module count used to size the power cap")

    p = sub.add_parser("run", help="run one tracker over a scenario")
    p.add_argument("--tracker", choices=sorted(TRACKERS), default="opgd")
    p.add_argument("--out", type=Path, required=True)
    _add_scenario_args(p)
    _add_step_args(p)
    _add_plant_args(p)

    p = sub.add_parser("compare", help="run several trackers on one scenario and tabulate")
    p.add_argument("--trackers", default="opgd,po,constant")
    p.add_argument("--out", type=Path, required=True)
    _add_scenario_args(p)
    _add_step_args(p)
    _add_plant_args(p)

    p = sub.add_parser("check-bounds", help="re-run the bound checks on a run directory")
    p.add_argument("--run-dir", type=Path, required=True)

    p = sub.add_parser("plot-script", help="write a matplotlib script for run directories")
    p.add_argument("--out", type=Path, default=Path("plot_runs.py"))
    return parser


def _cmd_generate(args) -> int:
    spec = FluctuationSpec(
        base_irradiance=args.base,
        max_step_change=args.max_change,
        temperature_profile=tuple(c + 273.15 for c in args.temperatures),
        seed=args.seed,
        step_seconds=args.dt,
    )
    s = generate_fluctuating(spec, args.horizon)
    if args.constrained:
        s = cycle_directives(s, default_constraint_cycle(args.modules), DEFAULT_SEGMENT_STEPS)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(s, args.out)
    print(f"wrote {s.horizon} steps to {args.out}")
    return 0


def _cmd_run(args) -> int:
    model = _model_from_args(args)
    scenario = _scenario_from_args(args)
    summary = execute_run(model, scenario, args.tracker, _step_config(args, model, scenario), args.out)
    print(format_table([summary]), end="")
    return 0


def _cmd_compare(args) -> int:
    model = _model_from_args(args)
    scenario = _scenario_from_args(args)
    names = [n.strip() for n in args.trackers.split(",") if n.strip()]
    unknown = sorted(set(names) - set(TRACKERS))
    if unknown or not names:
        raise CLIError(f"unknown trackers {unknown}; choose from {sorted(TRACKERS)}")
    summaries = compare_runs(model, scenario, names, _step_config(args, model, scenario), args.out)
    print(format_table(summaries), end="")
    return 0


def _cmd_check_bounds(args) -> int:
    model, scenario, summary = load_run(args.run_dir)
    report = bound_report(model, scenario, summary)
    _dump_json(report, args.run_dir / "bounds.json")
    for name, chk in report["checks"].items():
        if chk.get("skipped"):
            print(f"{name:<20} SKIP  ({chk.get('reason', '')})")
        else:
            status = "PASS" if chk["pass"] else "FAIL"
            print(f"{name:<20} {status}  worst ratio {chk['worst_ratio']:.3e} at step {chk['worst_step']}")
    return 0 if report["pass"] else 1


def _cmd_plot_script(args) -> int:
    args.out.write_text(PLOT_SCRIPT, encoding="utf-8")
    print(f"wrote {args.out}; usage: python {args.out} RUN_DIR [RUN_DIR ...]")
    return 0


COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "compare": _cmd_compare,
    "check-bounds": _cmd_check_bounds,
    "plot-script": _cmd_plot_script,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "modules", 1) < 1:
        print("error: --modules must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except SimulationError as exc:
        print(f"error: invariant violated at {exc}", file=sys.stderr)
        return 3
    except (CLIError, ScenarioError, FitError, MetricsError, BoundsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
