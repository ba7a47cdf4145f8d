import time

import pytest

from hermitian_ma.functions import make_function
from hermitian_ma.geom import make_builtin_metric, make_chi
from hermitian_ma.grid import GridSpec
from hermitian_ma.solver import SolveOptions, mms_generate, solve_continuation

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}

# named manufactured instances shared by several test modules
INSTANCES = {
    "quadratic": ("euclidean", (), "zero", "quadratic", (1.0,)),
    "exp": ("euclidean", (), "zero", "quadratic-plus-exp", (1.0, 0.1)),
    "torsion": ("conformal-exp", (1.0,), "omega", "quadratic-plus-exp-sum", (1.0, 0.1)),
    "anisotropic": ("diag-anisotropic", (0.3, 0.5, 2.0), "omega", "quadratic-plus-exp-sum", (1.0, 0.1)),
    "torsion-quadratic": ("conformal-exp", (1.0,), "omega", "quadratic", (1.0,)),
}

_SOLVES = {}


def make_instance(key, m, bump=0.0, n=2):
    metric_name, metric_params, chi_name, fn, params = INSTANCES[key]
    metric = make_builtin_metric(metric_name, metric_params, n)
    chi = make_chi(chi_name, (), metric)
    return mms_generate(metric, chi, make_function(fn, params, n), GridSpec(n, 0.0, 1.0, m), bump=bump,
                        name=key)


def cached_solve(key, m, bump=0.0):
    """(problem, state, report, seconds) for a manufactured instance, solved once per session."""
    tag = (key, m, bump)
    if tag not in _SOLVES:
        problem = make_instance(key, m, bump)
        start = time.perf_counter()
        state, report = solve_continuation(problem, SolveOptions())
        _SOLVES[tag] = (problem, state, report, time.perf_counter() - start)
    return _SOLVES[tag]


@pytest.fixture
def record_acceptance():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
