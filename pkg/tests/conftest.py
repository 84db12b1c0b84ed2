import numpy as np
import pytest

from pvtrack.pvmodel import reference_plant
from pvtrack.simulate import default_scenario


@pytest.fixture(scope="session")
def model():
    return reference_plant()


@pytest.fixture(scope="session")
def single_module():
    return reference_plant(module_count=1)


@pytest.fixture(scope="session")
def fluctuating():
    return default_scenario(constrained=False)


@pytest.fixture(scope="session")
def constrained():
    return default_scenario(constrained=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_argmax(f, lo, hi, step=1e-3):
    """Exhaustive search used as an independent oracle."""
    v = np.arange(lo, hi + step / 2, step)
    v = v[v <= hi]
    vals = f(v)
    k = int(np.argmax(vals))
    return float(v[k]), float(vals[k])


def bisect_root(f, lo, hi, tol=1e-13):
    """Plain bisection on a sign change, kept separate from the package solvers."""
    flo = f(lo)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
