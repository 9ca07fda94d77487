import numpy as np
import pytest

from sparse_ode.basis import make_bspline_basis
from sparse_ode.collocation import (SmoothConfig, SmoothProblem, banded_matvec, derivative_bic,
                                    fit_grade, fit_vanilla, integrated_processes,
                                    smooth_processes, smooth_processes_with_lambdas)
from sparse_ode.basis import banded_to_dense
from sparse_ode.exceptions import FitFailure
from sparse_ode.model import ObservationSet
from sparse_ode.penalties import lasso, scad
from sparse_ode.simulate import generate_observations, oscillator_truth, truth_fit


def test_banded_matvec(rng):
    basis = make_bspline_basis(30)
    ab = basis.gram["ss"]
    x = rng.normal(size=basis.n_basis)
    assert np.allclose(banded_matvec(ab, x), banded_to_dense(ab) @ x)


def test_effective_df_limits(rng):
    basis = make_bspline_basis(40)
    t = np.linspace(0, 1, 40)
    y = np.sin(3 * t) + 0.1 * rng.normal(size=40)
    obs = basis.evaluate(t)
    stiff = SmoothProblem(obs, y, __import__("sparse_ode").Gaussian(), basis.gram["ss"], 1e3)
    loose = SmoothProblem(obs, y, __import__("sparse_ode").Gaussian(), basis.gram["ss"], 1e-12)
    c = np.zeros(basis.n_basis)
    # a huge curvature penalty leaves only straight lines
    assert stiff.effective_df(c) == pytest.approx(2.0, abs=0.05)
    assert loose.effective_df(c) > 0.95 * basis.n_basis


@pytest.mark.parametrize("family", ["gaussian", "poisson", "bernoulli"])
def test_smoothing_tracks_truth(family):
    truth = oscillator_truth(4)
    n = 400 if family == "bernoulli" else 200
    data = generate_observations(truth, family, n, snr=20.0, seed=5)
    fit, lams = smooth_processes_with_lambdas(data, SmoothConfig(make_bspline_basis(n)))
    err = np.mean((fit.values(data.times) - truth.values(data.times)) ** 2)
    assert err < {"gaussian": 0.01, "poisson": 0.1, "bernoulli": 0.3}[family]
    assert len(lams) == data.p


def test_fixed_roughness_is_used():
    truth = oscillator_truth(0)
    data = generate_observations(truth, "gaussian", 60, snr=10.0, seed=1)
    _, lams = smooth_processes_with_lambdas(data, SmoothConfig(make_bspline_basis(60), 1e-6))
    assert lams == [1e-6] * data.p


def test_integrated_processes_match_closed_form():
    truth = oscillator_truth(2)
    basis = make_bspline_basis(200)
    fit = truth_fit(truth, basis)
    t = np.linspace(0, 1, 11)
    # theta' = A theta, so int_0^t theta = A^{-1} (theta(t) - theta(0))
    A = truth.gamma.interactions
    ref = np.linalg.solve(A, (truth.values(t) - truth.values([0.0])).T).T
    assert np.allclose(integrated_processes(fit, t), ref, atol=1e-8)


def test_vanilla_exact_with_projected_truth():
    truth = oscillator_truth(3)
    data = generate_observations(truth, "gaussian", 200, snr=np.inf, seed=0)
    basis = make_bspline_basis(200)
    res = fit_vanilla(data, basis, lasso(0.0), lambda_gamma_grid=[0.0], smooth=truth_fit(truth, basis))
    assert np.abs(res.gamma_hat.gamma - truth.gamma.gamma).max() < 1e-6


@pytest.mark.parametrize("runner", [fit_vanilla, fit_grade])
def test_baselines_find_support_on_clean_data(runner):
    truth = oscillator_truth(6)
    data = generate_observations(truth, "gaussian", 200, snr=50.0, seed=7)
    basis = make_bspline_basis(200)
    res = runner(data, basis, lasso(0.0), smooth=smooth_processes(data, SmoothConfig(basis)))
    assert np.all(res.support[truth.gamma.support])
    assert res.lambda_gamma in [rec["lambda_gamma"] for rec in res.trace]
    assert res.bic == min(rec["bic"] for rec in res.trace)
    assert res.info["method"] == runner.__name__.removeprefix("fit_")


def test_grade_poisson_and_scad_run():
    truth = oscillator_truth(1)
    data = generate_observations(truth, "poisson", 200, seed=2)
    basis = make_bspline_basis(200)
    res = fit_grade(data, basis, scad(0.0), smooth=smooth_processes(data, SmoothConfig(basis)))
    assert np.isfinite(res.bic)
    assert res.gamma_hat.p == 8


def test_smoothing_failure_is_reported(monkeypatch):
    import sparse_ode.collocation as col
    from sparse_ode.exceptions import ConvergenceFailure

    def boom(*args, **kwargs):
        raise ConvergenceFailure("forced")

    monkeypatch.setattr(col, "newton_minimize", boom)
    data = ObservationSet(np.linspace(0, 1, 20), np.zeros((20, 1)), "gaussian")
    with pytest.raises(FitFailure):
        smooth_processes(data, SmoothConfig(make_bspline_basis(20)))


def test_derivative_bic_penalises_size():
    rss = np.array([0.1, 0.2])
    assert derivative_bic(rss, 3, 100) > derivative_bic(rss, 1, 100)
    assert derivative_bic(rss, 0, 100) == pytest.approx(0.5 * np.mean(np.log(rss)))
