import time

import numpy as np
import pytest

from uhlmann_kit import model as zoo_mod
from uhlmann_kit.matcore import hermitian_part

_ACCEPTANCE = []
_SUITE_BUDGET_S = 120.0


def qutrit_parallel():
    """Two-parameter parallel model on n=3 with a non-diagonal base state."""
    rho0 = np.array([[0.5, 0.1, 0.05j], [0.1, 0.3, 0.02], [-0.05j, 0.02, 0.2]])
    gens = [np.diag([1.0, 0.0, -1.0]), np.diag([0.0, 1.0, 0.0])]
    return zoo_mod.parallel_exp(gens, hermitian_part(rho0))


ZOO_FACTORIES = {
    "bloch_full": zoo_mod.bloch_full,
    "bloch_equator2": zoo_mod.bloch_equator2,
    "classical_simplex2": lambda: zoo_mod.classical_simplex(2),
    "classical_simplex3": lambda: zoo_mod.classical_simplex(3),
    "parallel_exp": zoo_mod.parallel_exp,
    "parallel_exp_qutrit": qutrit_parallel,
    "bloch_arc": zoo_mod.bloch_arc,
}

QUASI_CLASSICAL = ["classical_simplex2", "classical_simplex3", "parallel_exp", "parallel_exp_qutrit"]


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture(params=sorted(ZOO_FACTORIES))
def any_model(request):
    return ZOO_FACTORIES[request.param]()


@pytest.fixture(params=QUASI_CLASSICAL)
def qc_model(request):
    return ZOO_FACTORIES[request.param]()


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_sessionstart(session):
    session.config._uk_start = time.perf_counter()


@pytest.hookimpl(tryfirst=True)
def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - session.config._uk_start
    session.config._uk_elapsed = elapsed
    if _ACCEPTANCE and elapsed >= _SUITE_BUDGET_S:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
    elapsed = getattr(config, "_uk_elapsed", None)
    if elapsed is not None:
        ok = elapsed < _SUITE_BUDGET_S
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion 10: full suite wall-clock "
                      f"{elapsed:.1f} s (< {_SUITE_BUDGET_S:.0f} s)")
