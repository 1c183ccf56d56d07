import numpy as np
import pytest

from lrccs.model import ProblemDims, gen_ground_truth, gen_measurements

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """``report(label, passed, detail)`` prints one PASS/FAIL line per criterion."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(label, passed, detail):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'} | {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return passed

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem():
    gt = gen_ground_truth(ProblemDims(30, 40, 2, 1), seed=1)
    ms = gen_measurements(gt, 40, seed=2)
    return gt, ms
