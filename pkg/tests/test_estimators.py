import warnings

import numpy as np
import pytest
from sklearn.base import clone

from sparse_ode import SparseLinearODE
from sparse_ode.exceptions import DomainError, InvalidConfigurationError, InvalidDataError
from sparse_ode.simulate import generate_observations, oscillator_truth


@pytest.fixture(scope="module")
def fitted():
    truth = oscillator_truth(2)
    data = generate_observations(truth, "gaussian", 100, snr=20.0, seed=3)
    t = 5.0 + 2.0 * data.times  # original units: [5, 7]
    est = SparseLinearODE(method="vanilla")
    est.fit(t, data.y)
    return est, truth, t, data


def test_params_and_clone():
    est = SparseLinearODE(penalty="scad", lambda_theta_init=0.5)
    assert clone(est).get_params() == est.get_params()
    assert est.set_params(method="grade").method == "grade"


def test_coefficients_are_in_original_time_units(fitted):
    est, truth, t, _ = fitted
    # stretching time by 2 halves every rate
    assert np.all(est.support_[truth.gamma.support])
    big = np.abs(truth.gamma.interactions) > 0
    assert np.allclose(est.coef_[big], truth.gamma.interactions[big] / 2.0, rtol=0.15)
    assert est.n_features_in_ == 8


def test_predict_shapes_and_domain(fitted):
    est, truth, t, data = fitted
    assert est.predict(t).shape == (100, 8)
    assert np.mean((est.predict(t) - truth.values(data.times)) ** 2) < 0.01
    d = est.predict_derivative([6.0])
    assert np.allclose(d, truth.values([0.5], 1) / 2.0, atol=1.0)
    assert np.allclose(est.predict_mean(t), est.predict(t))
    with pytest.raises(DomainError):
        est.predict([4.0])


def test_input_validation():
    with pytest.raises(InvalidDataError):
        SparseLinearODE().fit([0, 1, 1], np.zeros((3, 2)))
    with pytest.raises(InvalidDataError):
        SparseLinearODE().fit(np.arange(20.0), np.zeros((19, 2)))
    with pytest.raises(InvalidConfigurationError):
        SparseLinearODE(method="ols").fit(np.arange(20.0), np.zeros((20, 2)))


def test_hdgp_method_with_poisson_counts():
    truth = oscillator_truth(0)
    data = generate_observations(truth, "poisson", 100, seed=1)
    est = SparseLinearODE(lambda_gamma_grid=[0.05, 0.01])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est.fit(data.times, data.y)
    assert [f.name for f in est.data_.families] == ["poisson"] * 8
    assert est.result_.lambda_gamma in (0.05, 0.01)
    assert np.all(np.isfinite(est.predict_mean(data.times)))
