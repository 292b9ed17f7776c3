import numpy as np
import pytest

from idmix.idlaw import compound_poisson, gaussian_triplet
from idmix.levybasis import GeneratingQuadruple
from idmix.mmafield import MmaModel, exponential_kernel, indicator_kernel


@pytest.fixture(scope="session")
def ou():
    return MmaModel(exponential_kernel(1.0), GeneratingQuadruple(gaussian_triplet(1.0)))


@pytest.fixture(scope="session")
def ind_cp():
    return MmaModel(indicator_kernel(0, 1), GeneratingQuadruple(compound_poisson([1.0], [1.0])))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _CRITERIA.get(n, (title, True))
    _CRITERIA[n] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {title}")
