import numpy as np
import pytest

from gmforecast.blocking import FunctionalSpec
from gmforecast.forecaster import lift_functional
from gmforecast.simulation import periodic_ar_fixture, seasonal_ma_fixture, seasonal_ma_functional


@pytest.fixture(scope="session")
def periodic_ar():
    """Integrated periodic AR(1), T = 4, with its discounted functional."""
    recipe = periodic_ar_fixture()
    model = recipe.model()
    lifted = lift_functional(model.spec, FunctionalSpec.geometric([0.5], 0.5), T=4)
    return recipe, model, lifted


@pytest.fixture(scope="session")
def seasonal_ma():
    """Weekly periodic MA with (1-B)(1-B^4) and the two-week average functional."""
    recipe = seasonal_ma_fixture()
    model = recipe.model()
    lifted = lift_functional(model.spec, seasonal_ma_functional(7, 0.3))
    return recipe, model, lifted


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance bookkeeping ----------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test fills `detail` and the outcome decides PASS/FAIL."""
    import time

    record = {"detail": "", "started": time.perf_counter()}
    yield record
    num = record["number"]
    elapsed = time.perf_counter() - record["started"]
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE_LINES[num] = (f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {record['title']}"
                             f" | {record['detail']} | {elapsed:.2f} s")
    print(ACCEPTANCE_LINES[num])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[num])
