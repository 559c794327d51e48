import numpy as np
import pytest

from hplod.assembly import Coefficient, assemble_problem
from hplod.harness.models import f1
from hplod.mesh import build_mesh
from hplod.spaces import FineSpace


def rough_coefficient(dim=2, n_eps=16, seed=0, lo=0.25, hi=2.5):
    m = build_mesh(dim, n_eps)
    return Coefficient(m, np.random.default_rng(seed).uniform(lo, hi, m.num_elements))


def make_problem(dim=2, h=32, n_eps=16, seed=0, f=f1):
    if dim == 1 and f is f1:
        f = lambda x: np.sin(3 * np.pi * x[:, 0])  # noqa: E731
    return assemble_problem(FineSpace(build_mesh(dim, h)), rough_coefficient(dim, n_eps, seed), f)


@pytest.fixture(scope="session")
def problem_32():
    return make_problem(2, 32, 16)


# acceptance criteria append (name, passed, detail) here; printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
