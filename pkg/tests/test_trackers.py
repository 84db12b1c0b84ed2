import numpy as np
import pytest

from pvtrack.bounds import estimate_constants
from pvtrack.constraints import ConstraintDirective, FeasibleSet, realize
from pvtrack.pvmodel import STC, mpp_oracle, voc_at
from pvtrack.scenario import static_scenario
from pvtrack.simulate import mppt_domains, run_simulation
from pvtrack.trackers import (
    OPGDTracker,
    PerturbObserveTracker,
    StepConfig,
    TrackerState,
    constant_voltage_step,
    duty_cycle,
    make_tracker,
    opgd_step,
    po_step,
)

CFG = StepConfig()
BOX = FeasibleSet.uniform(0.0, 36.3, 1)


class TestOPGDStep:
    def test_zero_gradient_fixed_point(self):
        s = TrackerState(np.array([25.0]))
        assert opgd_step(s, np.zeros(1), BOX, CFG).x[0] == 25.0

    def test_clamp_to_upper(self):
        s = TrackerState(np.array([35.0]))
        assert opgd_step(s, np.array([-20.0]), BOX, CFG).x[0] == 36.3

    def test_step_arithmetic(self):
        s = TrackerState(np.array([25.0]))
        assert opgd_step(s, np.array([-5.0]), BOX, CFG).x[0] == pytest.approx(26.0)

    def test_non_finite_gradient(self):
        with pytest.raises(ValueError):
            opgd_step(TrackerState(np.array([25.0])), np.array([np.inf]), BOX, CFG)

    def test_static_convergence_from_20v(self, model):
        s = static_scenario(200)
        run = run_simulation(model, s, OPGDTracker(StepConfig(opgd_step_size=0.2)), x0=np.full(8, 20.0))
        e = run.errors
        v_mpp, _ = mpp_oracle(model, STC)
        assert abs(run.records[-1].x[0] - v_mpp) < 0.05
        positive = e[e > 0]
        assert np.all(np.diff(positive) < 0)
        assert np.all(e[len(positive):] == 0)

    def test_contraction_with_optimal_step(self, model):
        s = static_scenario(200)
        c = estimate_constants(model, s, mppt_domains(model, s))
        run = run_simulation(model, s, OPGDTracker(StepConfig(opgd_step_size=c.optimal_step)))
        e = run.errors
        q = c.contraction + 1e-9
        assert np.all(e[1:] <= q * e[:-1])

    def test_separable(self, model, single_module, fluctuating):
        vec = run_simulation(model, fluctuating, make_tracker("opgd"))
        one = run_simulation(single_module, fluctuating, make_tracker("opgd"))
        for a, b in zip(vec.records, one.records):
            np.testing.assert_array_equal(a.x, np.full(8, b.x[0]))


class TestPO:
    def test_first_step_goes_up(self):
        s = po_step(TrackerState(np.array([25.0])), 100.0, BOX, CFG)
        assert s.direction == 1 and s.x[0] == 25.5 and s.last_power == 100.0

    def test_rising_power_keeps_direction(self):
        s = TrackerState(np.array([25.0]), last_power=100.0, direction=1)
        s = po_step(s, 101.0, BOX, CFG)
        s = po_step(s, 102.0, BOX, CFG)
        assert s.direction == 1 and s.x[0] == 26.0

    def test_drop_reverses(self):
        s = TrackerState(np.array([25.0]), last_power=100.0, direction=1)
        s = po_step(s, 99.0, BOX, CFG)
        assert s.direction == -1 and s.x[0] == 24.5

    def test_static_oscillation_band(self, model):
        run = run_simulation(model, static_scenario(200), make_tracker("po"), x0=np.full(8, 20.0))
        v_mpp, _ = mpp_oracle(model, STC)
        tail = np.array([r.x[0] for r in run.records[100:]])
        assert np.all(np.abs(tail - v_mpp) <= 2 * CFG.po_perturb)

    def test_uses_power_only(self, model):
        class PowerOnly:
            def power(self, x):
                return float(np.sum(x))

            def gradient(self, x):
                raise AssertionError("P&O must not ask for gradients")

        fs = realize(ConstraintDirective.mppt(), model, STC)
        state = TrackerState(np.full(8, 25.0))
        for _ in range(5):
            state = PerturbObserveTracker().step(state, PowerOnly(), fs)
        assert fs.contains(state.x)


class TestConstant:
    def test_unconstrained(self, model):
        fs = realize(ConstraintDirective.mppt(), model, STC)
        s = TrackerState(np.full(8, 10.0), setpoint=29.0)
        np.testing.assert_array_equal(constant_voltage_step(s, fs).x, 29.0)

    def test_voltage_cap(self, model):
        fs = realize(ConstraintDirective.voltage_max(27.0), model, STC)
        s = TrackerState(np.full(8, 29.0), setpoint=29.0)
        np.testing.assert_array_equal(constant_voltage_step(s, fs).x, 27.0)

    def test_constant_trajectory(self, model, fluctuating):
        run = run_simulation(model, fluctuating, make_tracker("constant"))
        assert all(np.all(r.x == 29.0) for r in run.records)

    def test_missing_setpoint(self):
        with pytest.raises(ValueError):
            constant_voltage_step(TrackerState(np.array([1.0])), BOX)


@pytest.mark.parametrize("name", ["opgd", "po", "constant", "oracle"])
def test_feasible_every_step(model, constrained, name):
    run = run_simulation(model, constrained, make_tracker(name))
    for r, fs in zip(run.records, run.domains):
        assert fs.contains(r.x)
        assert np.all(r.x <= voc_at(model, constrained[r.t].env))


class TestDutyCycle:
    def test_ratio(self):
        assert duty_cycle(29.2, 58.4) == 0.5

    def test_clamp(self):
        assert duty_cycle(40.0, 36.0) == 1.0
        assert duty_cycle(0.0, 12.0) == 0.0

    def test_bad_bus(self):
        with pytest.raises(ValueError):
            duty_cycle(10.0, 0.0)


def test_step_config_validation():
    with pytest.raises(ValueError):
        StepConfig(opgd_step_size=0.0)
    with pytest.raises(ValueError):
        StepConfig(po_perturb=-1.0)
    with pytest.raises(ValueError):
        StepConfig(constant_setpoint=40.0)


def test_unknown_tracker():
    with pytest.raises(ValueError):
        make_tracker("pso")
