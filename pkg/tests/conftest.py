import numpy as np
import pytest

from viscoflow import bv_analysis as bv
from viscoflow import viscous_solver as vs
from viscoflow.contact import default_tolerances
from viscoflow.instances import (
    equilibrated_datum, reference_problem, tiny_problem, unstable_datum,
)

REF_STEPS = 200


@pytest.fixture(scope="session")
def ref():
    return reference_problem()


@pytest.fixture(scope="session")
def tiny():
    return tiny_problem()


@pytest.fixture(scope="session")
def ref_tol(ref):
    return default_tolerances(ref)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ref_run(ref):
    """One viscous run at eps = mu = nu = 1e-2 on the reference grid."""
    return vs.solve(ref, equilibrated_datum(ref), vs.uniform_times(ref.loading.T, REF_STEPS),
                    vs.ParamTriple(1e-2, 1e-2, 1e-2))


@pytest.fixture(scope="session")
def joint_sweep(ref, ref_tol):
    times = vs.uniform_times(ref.loading.T, REF_STEPS)
    return bv.limit_sweep(ref, equilibrated_datum(ref), times, bv.JOINT, tol=ref_tol)


@pytest.fixture(scope="session")
def unstable_sweep(ref, ref_tol):
    times = vs.layered_times(ref.loading.T, REF_STEPS)
    return bv.limit_sweep(ref, unstable_datum(ref), times, bv.JOINT, tol=ref_tol)


@pytest.fixture(scope="session")
def rescaled_pair(ref):
    """The same eps = 1e-3 evolution under loading times T and 2T, each on its own clock."""
    params = vs.ParamTriple(1e-3, 1e-3, 1e-3)
    slow_problem = reference_problem(T=2 * ref.loading.T)
    fast = vs.solve(ref, equilibrated_datum(ref), vs.uniform_times(ref.loading.T, REF_STEPS), params)
    slow = vs.solve(slow_problem, equilibrated_datum(slow_problem),
                    vs.uniform_times(slow_problem.loading.T, REF_STEPS), params)
    return fast, slow


# -- acceptance summary: one line per criterion in the terminal report --------------------
_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
