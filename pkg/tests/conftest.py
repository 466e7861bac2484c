import numpy as np
import pytest

from tailfall.model import RobotParams, build_planning_model, build_sim_model
from tailfall.sim import Scenario, plan_scenario, run_scenario


@pytest.fixture(scope="session")
def params():
    return RobotParams()


@pytest.fixture(scope="session")
def plan_model(params):
    return build_planning_model(params)


@pytest.fixture(scope="session")
def sim_model(params):
    return build_sim_model(params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_state(rng, model, speed=1.0):
    """A random, valid state (tail pitch kept clear of the gimbal singularity)."""
    nj = model.n_joints
    x = np.zeros(model.nx)
    x[0:3] = rng.normal(size=3)
    x[3:7] = random_quat(rng)
    x[7] = rng.uniform(-1.2, 1.2)
    x[8] = rng.uniform(-3.0, 3.0)
    if nj == 3:
        lo, hi = model.params.tail_length_range
        x[9] = rng.uniform(lo, hi)
    x[7 + nj :] = speed * rng.normal(size=6 + nj)
    return x


@pytest.fixture(scope="session")
def nominal_scenario():
    return Scenario.from_degrees(15.0, 25.0, 35.0, height=1.85)


@pytest.fixture(scope="session")
def nominal_solution(nominal_scenario, params):
    return plan_scenario(nominal_scenario, params, budget=0.4)


@pytest.fixture(scope="session")
def nominal_run(nominal_scenario, nominal_solution):
    """(solution, log, verdict) for the nominal [15, 25, 35] deg drop."""
    return run_scenario(nominal_scenario, solution=nominal_solution)


# -- acceptance criteria summary -----------------------------------------------------

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): test belongs to a numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, [title, True])
    entry[1] = entry[1] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
