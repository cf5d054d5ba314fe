import numpy as np
import pytest

from maxkant import signals as S

ACCEPTANCE_RESULTS = []


def record(criterion, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE_RESULTS.append((criterion, bool(passed), detail))
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def random_step(rng, lo=-2.0, hi=2.0, pieces=None, vmax=1.0, name="rstep"):
    """Non-negative step signal with random edges in [lo, hi]."""
    pieces = pieces or int(rng.integers(1, 7))
    edges = np.sort(rng.uniform(lo, hi, pieces + 1))
    values = rng.uniform(0.0, vmax, pieces)
    return S.step(edges, values, name=name)


def step_pointwise(f, g, op):
    """Step signal equal to ``op(f, g)`` cell by cell on the merged edges."""
    ef = np.asarray(f.meta["edges"])
    eg = np.asarray(g.meta["edges"])
    edges = np.union1d(ef, eg)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return S.step(edges, op(f(mids), g(mids)), name="combo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
