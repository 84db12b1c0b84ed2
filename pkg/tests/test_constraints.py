import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import bisect_root
from pvtrack.constraints import ConstraintDirective, FeasibleSet, Mode, project, realize
from pvtrack.pvmodel import STC, Environment, mpp_oracle, power, voc_at


class TestDirective:
    def test_mppt_limit_zeroed(self):
        assert ConstraintDirective(Mode.MPPT, 12.0).limit == 0.0

    @pytest.mark.parametrize(
        "mode,limit", [(Mode.DELTA, -1.0), (Mode.RAMP, 0.0), (Mode.ABS, 0.0), (Mode.VMAX, -3.0)]
    )
    def test_invalid(self, mode, limit):
        with pytest.raises(ValueError):
            ConstraintDirective(mode, limit)

    def test_keyword_construction(self):
        assert ConstraintDirective("VMAX", 27.0).mode is Mode.VMAX


class TestRealize:
    def test_mppt_stc(self, model):
        fs = realize(ConstraintDirective.mppt(), model, STC)
        assert len(fs) == 8
        np.testing.assert_array_equal(fs.lower, 0.0)
        np.testing.assert_allclose(fs.upper, 36.3, atol=1e-9)

    def test_abs_at_full_power_inactive(self, model):
        _, p_mpp = mpp_oracle(model, STC)
        fs = realize(ConstraintDirective.absolute_power(8 * p_mpp), model, STC)
        np.testing.assert_array_equal(fs.lower, 0.0)

    def test_abs_right_branch(self, model):
        fs = realize(ConstraintDirective.absolute_power(8 * 150.0), model, STC)
        v_mpp, _ = mpp_oracle(model, STC)
        ref = bisect_root(lambda v: power(model, STC, v) - 150.0, v_mpp, voc_at(model, STC))
        v_high = fs.lower[0]
        assert v_high > 29.2
        assert abs(power(model, STC, v_high) - 150.0) <= 1e-6
        assert abs(v_high - ref) < 1e-9
        assert fs.upper[0] == voc_at(model, STC)

    def test_delta_power(self, model):
        _, p_mpp = mpp_oracle(model, STC)
        fs = realize(ConstraintDirective.delta_power(400.0), model, STC)
        assert power(model, STC, fs.lower[0]) == pytest.approx(p_mpp - 50.0, abs=1e-6)

    def test_delta_exceeding_total_is_single_point(self, model):
        fs = realize(ConstraintDirective.delta_power(1e6), model, STC)
        np.testing.assert_allclose(fs.lower, voc_at(model, STC))
        np.testing.assert_array_equal(fs.lower, fs.upper)

    def test_ramp_caps_increase(self, model):
        fs = realize(ConstraintDirective.ramp_rate(100.0), model, STC, prev_power=1000.0, dt=0.1)
        assert 8 * power(model, STC, fs.lower[0]) == pytest.approx(1010.0, abs=1e-5)

    def test_ramp_inactive_when_headroom(self, model):
        fs = realize(ConstraintDirective.ramp_rate(100.0), model, STC, prev_power=1700.0, dt=1.0)
        np.testing.assert_array_equal(fs.lower, 0.0)

    def test_vmax(self, model):
        fs = realize(ConstraintDirective.voltage_max(27.0), model, STC)
        np.testing.assert_array_equal(fs.upper, 27.0)
        fs = realize(ConstraintDirective.voltage_max(50.0), model, STC)
        np.testing.assert_allclose(fs.upper, voc_at(model, STC))

    def test_dark(self, model):
        fs = realize(ConstraintDirective.absolute_power(100.0), model, Environment(0.0))
        np.testing.assert_array_equal(fs.upper, 0.0)

    def test_right_branch_never_exceeds_cap(self, model, rng):
        for _ in range(50):
            env = Environment(rng.uniform(100, 1200), rng.uniform(270, 340))
            _, p_mpp = mpp_oracle(model, env)
            cap_m = rng.uniform(0.05, 0.99) * p_mpp
            fs = realize(ConstraintDirective.absolute_power(8 * cap_m), model, env)
            v = np.linspace(fs.lower[0], fs.upper[0], 400)
            assert np.all(power(model, env, v) <= cap_m + 1e-6)

    def test_sets_within_domain(self, model, rng):
        for _ in range(50):
            env = Environment(rng.uniform(0, 1200), rng.uniform(270, 340))
            mode = list(Mode)[rng.integers(len(Mode))]
            limit = {Mode.MPPT: 0.0, Mode.DELTA: rng.uniform(0, 2000), Mode.RAMP: rng.uniform(1, 500),
                     Mode.ABS: rng.uniform(1, 2000), Mode.VMAX: rng.uniform(1, 40)}[mode]
            fs = realize(ConstraintDirective(mode, limit), model, env, prev_power=rng.uniform(0, 1700))
            assert np.all(fs.lower >= 0)
            assert np.all(fs.lower <= fs.upper)
            assert np.all(fs.upper <= voc_at(model, env))


class TestProject:
    def test_interior_fixed(self):
        fs = FeasibleSet.uniform(0.0, 36.3, 3)
        x = np.array([1.0, 20.0, 36.3])
        np.testing.assert_array_equal(project(x, fs), x)

    def test_clamp_upper(self):
        assert project(np.array([40.0]), FeasibleSet.uniform(0.0, 36.3, 1))[0] == 36.3

    def test_non_finite(self):
        with pytest.raises(ValueError):
            project(np.array([np.nan]), FeasibleSet.uniform(0, 1, 1))

    def test_invalid_box(self):
        with pytest.raises(ValueError):
            FeasibleSet(np.array([2.0]), np.array([1.0]))

    def test_grid_projection_oracle(self, rng):
        grid = np.arange(0.0, 40.0 + 5e-4, 1e-3)
        for _ in range(1000):
            lo, hi = np.sort(rng.uniform(0, 40, 2))
            x = rng.uniform(-5, 45)
            on_grid = grid[(grid >= lo) & (grid <= hi)]
            if on_grid.size == 0:
                continue
            best = on_grid[np.argmin(np.abs(on_grid - x))]
            got = project(np.array([x]), FeasibleSet.uniform(lo, hi, 1))[0]
            assert abs(got - best) <= 1e-3

    @settings(max_examples=200, deadline=None)
    @given(
        a=arrays(np.float64, 4, elements=st.floats(-50, 50)),
        b=arrays(np.float64, 4, elements=st.floats(-50, 50)),
        lo=arrays(np.float64, 4, elements=st.floats(0, 20)),
        w=arrays(np.float64, 4, elements=st.floats(0, 20)),
    )
    def test_properties(self, a, b, lo, w):
        fs = FeasibleSet(lo, lo + w)
        pa, pb = project(a, fs), project(b, fs)
        assert fs.contains(pa)
        np.testing.assert_array_equal(project(pa, fs), pa)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
