import warnings

import numpy as np
import pytest
from sklearn.exceptions import ConvergenceWarning

from oracles import grid_argmin
from sparse_ode.basis import make_bspline_basis
from sparse_ode.collocation import SmoothConfig, smooth_processes
from sparse_ode.outer import outer_step, penalized_wls, wls_objective, working_response
from sparse_ode.penalties import Penalty, lasso, scad, scad_penalty
from sparse_ode.profiling import ProfileState, _inner, _ridge_gamma
from sparse_ode.simulate import generate_observations, oscillator_truth


def _random_wls(rng, n=60, q=5):
    X = rng.normal(size=(n, q))
    X[:, 0] = 1.0
    w = rng.uniform(0.2, 3.0, n)
    offset = rng.normal(size=n)
    ytilde = offset + X @ rng.normal(scale=2.0, size=q) + rng.normal(size=n)
    return X, offset, ytilde, w


def test_zero_penalty_matches_normal_equations(rng):
    for _ in range(20):
        X, offset, ytilde, w = _random_wls(rng)
        got = penalized_wls(X, offset, ytilde, w, lasso(0.0), tol=1e-13)
        ref = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * (ytilde - offset)))
        assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


def test_orthonormal_design_gives_soft_threshold(rng):
    n = 50
    Q, _ = np.linalg.qr(rng.normal(size=(n, 4)))
    X = Q * np.sqrt(n)
    z = rng.normal(scale=2.0, size=n)
    got = penalized_wls(X, 0.0, z, np.ones(n), lasso(0.5), unpenalized=())
    ols = X.T @ z / n
    assert np.allclose(got, np.sign(ols) * np.maximum(np.abs(ols) - 0.5, 0.0), atol=1e-10)


@pytest.mark.parametrize("kind", ["lasso", "scad"])
def test_coordinatewise_optimality_against_grid(kind, rng):
    for _ in range(10):
        X, offset, ytilde, w = _random_wls(rng)
        pen = Penalty(kind, rng.uniform(0.05, 1.0))
        g = penalized_wls(X, offset, ytilde, w, pen, tol=1e-12)
        for k in range(X.shape[1]):
            def f(v, k=k):
                v = np.atleast_1d(v)
                G = np.repeat(g[None, :], v.size, axis=0)
                G[:, k] = v
                r = (ytilde - offset)[None, :] - G @ X.T
                val = 0.5 * (r ** 2 * w).mean(axis=1)
                if k:
                    val = val + (pen.lam * np.abs(v) if kind == "lasso"
                                 else scad_penalty(v, pen.lam, pen.a))
                return val
            ref = grid_argmin(f, g[k] - 10, g[k] + 10)
            assert abs(g[k] - ref) <= 1e-6 * max(1.0, abs(ref))


def test_centering_is_a_reparametrisation(rng):
    X, offset, ytilde, w = _random_wls(rng)
    center = rng.normal(size=X.shape[1])
    a = penalized_wls(X, offset, ytilde, w, lasso(0.2), tol=1e-12)
    b = penalized_wls(X, offset + X @ center, ytilde, w, lasso(0.2), center=center, tol=1e-12)
    assert np.allclose(a, b, atol=1e-9)
    assert wls_objective(X, offset, ytilde, w, lasso(0.2), a) <= \
        wls_objective(X, offset, ytilde, w, lasso(0.2), a + 1e-3) + 1e-15


def test_sweep_budget_warns(rng):
    X, offset, ytilde, w = _random_wls(rng)
    X[:, 2] = X[:, 1] + 1e-3 * rng.normal(size=X.shape[0])
    with pytest.warns(ConvergenceWarning):
        penalized_wls(X, offset, ytilde, w, lasso(0.0), max_sweeps=2, tol=0.0)


def test_working_response():
    y = np.array([1.0, 2.0])
    yt, w = working_response("gaussian", y, np.array([0.3, -0.2]))
    assert np.allclose(yt, y) and np.allclose(w, 1.0)
    yt, w = working_response("poisson", np.array([3.0]), np.array([0.0]))
    assert yt[0] == pytest.approx(2.0) and w[0] == pytest.approx(1.0)


@pytest.mark.parametrize("pen", [lasso(0.05), scad(0.05)])
def test_outer_step_never_increases_criterion(pen):
    truth = oscillator_truth(1)
    data = generate_observations(truth, "gaussian", 60, snr=5.0, seed=2)
    basis = make_bspline_basis(data.n)
    fit = smooth_processes(data, SmoothConfig(basis))
    state = ProfileState(data, basis, basis.evaluate(data.times), fit, _ridge_gamma(fit), 1.0)
    for j in range(data.p):
        local = state.replace(fit=state.fit.with_column(j, _inner(state, j, state.gamma.gamma[j])))
        for _ in range(3):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                step = outer_step(j, local, pen)
            assert step.h_value <= step.h_previous + 1e-10
            local = local.replace(gamma=local.gamma.with_row(j, step.gamma),
                                  fit=local.fit.with_column(j, step.coef))
