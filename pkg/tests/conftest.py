import numpy as np
import pytest

from sparse_ode.basis import make_bspline_basis
from sparse_ode.inner import InnerProblem
from sparse_ode.model import ProcessFit


def random_inner_problem(rng, family, n=40, p=3, lambda_theta=None):
    """Small random inner problem with data drawn from a plausible curve."""
    basis = make_bspline_basis(n)
    m = basis.n_basis
    t = np.linspace(0.0, 1.0, n)
    coef = np.cumsum(rng.normal(scale=0.3, size=(m, p)), axis=0) / np.sqrt(m)
    others = ProcessFit(basis, coef)
    j = int(rng.integers(p))
    theta = basis.evaluate(t) @ coef[:, j]
    if family == "gaussian":
        y = theta + 0.2 * rng.standard_normal(n)
    elif family == "poisson":
        y = rng.poisson(np.exp(theta)).astype(float)
    else:
        y = (rng.random(n) < 1 / (1 + np.exp(-theta))).astype(float)
    gamma = rng.normal(scale=2.0, size=p + 1)
    lam = 10 ** rng.uniform(-2, 1) if lambda_theta is None else lambda_theta
    return InnerProblem(j, y, family, gamma, others, lam, t)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
