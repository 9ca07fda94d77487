import numpy as np
import pytest

from conftest import random_inner_problem
from sparse_ode.exceptions import InvalidConfigurationError
from sparse_ode.inner import (InnerProblem, dc_dgamma, g_gradient, g_hessian, g_value,
                              solve_inner)
from sparse_ode.model import ProcessFit

FAMS = ["gaussian", "poisson", "bernoulli"]


def _fd_gradient(f, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("fam", FAMS)
def test_gradient_and_hessian_by_finite_differences(fam, rng):
    for _ in range(5):
        prob = random_inner_problem(rng, fam)
        c = prob.others.coef[:, prob.j] + 0.1 * rng.normal(size=prob.basis.n_basis)
        g = g_gradient(prob, c)
        g_fd = _fd_gradient(lambda x: g_value(prob, x), c)
        assert np.linalg.norm(g - g_fd) <= 1e-6 * np.linalg.norm(g)
        H = g_hessian(prob, c)
        H_fd = np.column_stack([_fd_gradient(lambda x: g_gradient(prob, x)[i], c)
                                for i in range(c.size)])
        assert np.linalg.norm(H - H_fd) <= 1e-5 * np.linalg.norm(H)
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() > 0


@pytest.mark.parametrize("fam", FAMS)
def test_mixed_derivative_by_finite_differences(fam, rng):
    prob = random_inner_problem(rng, fam)
    c = prob.others.coef[:, prob.j]

    def grad_at(gamma):
        return InnerProblem(prob.j, prob.y, prob.family, gamma, prob.others,
                            prob.lambda_theta, prob.times).gradient(c)

    h = 1e-6
    for k in range(prob.gamma.size):
        e = np.zeros_like(prob.gamma)
        e[k] = h
        fd = (grad_at(prob.gamma + e) - grad_at(prob.gamma - e)) / (2 * h)
        assert np.allclose(prob.mixed(c)[:, k], fd, rtol=1e-5, atol=1e-7 * np.abs(fd).max())


@pytest.mark.parametrize("fam", FAMS)
def test_solution_is_stationary(fam, rng):
    prob = random_inner_problem(rng, fam)
    c = solve_inner(prob)
    assert np.abs(g_gradient(prob, c)).max() < 1e-6
    assert g_value(prob, c) <= g_value(prob, prob.others.coef[:, prob.j]) + 1e-12


def test_dc_dgamma_against_resolve(rng):
    prob = random_inner_problem(rng, "poisson", lambda_theta=0.5)
    c = solve_inner(prob, xtol=1e-12)
    J = dc_dgamma(prob, c)
    h = 1e-5
    for k in range(prob.gamma.size):
        e = np.zeros_like(prob.gamma)
        e[k] = h
        sols = [solve_inner(InnerProblem(prob.j, prob.y, prob.family, prob.gamma + s * e,
                                         prob.others, prob.lambda_theta, prob.times),
                            c, xtol=1e-12) for s in (1, -1)]
        fd = (sols[0] - sols[1]) / (2 * h)
        assert np.linalg.norm(J[:, k] - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_zero_lambda_gives_zero_sensitivity(rng):
    prob = random_inner_problem(rng, "gaussian", lambda_theta=0.0)
    c = solve_inner(prob)
    assert not dc_dgamma(prob, c).any()


def test_ode_consistent_curve_has_no_penalty(rng):
    # theta_1' = 2 theta_2 with theta_2 = 1 gives theta_1 = 2 t + const, which the spline represents
    prob = random_inner_problem(rng, "gaussian", p=2)
    basis = prob.basis
    greville = np.array([basis.knots[i + 1:i + basis.order].mean() for i in range(basis.n_basis)])
    coef = np.column_stack([2 * greville + 0.3, np.ones(basis.n_basis)])
    fit = ProcessFit(basis, coef)
    p2 = InnerProblem(0, prob.y, "gaussian", np.array([0.0, 0.0, 2.0]), fit, 5.0, prob.times)
    assert np.abs(p2.residual(coef[:, 0])).max() < 1e-10


def test_validation(rng):
    prob = random_inner_problem(rng, "gaussian")
    with pytest.raises(InvalidConfigurationError):
        InnerProblem(0, prob.y, "gaussian", np.zeros(2), prob.others, 1.0, prob.times)
    with pytest.raises(InvalidConfigurationError):
        InnerProblem(0, prob.y, "gaussian", prob.gamma, prob.others, -1.0, prob.times)
    with pytest.raises(InvalidConfigurationError):
        InnerProblem(0, prob.y, "gaussian", prob.gamma * np.nan, prob.others, 1.0, prob.times)
