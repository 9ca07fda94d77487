"""scikit-learn style front end.

``fit(t, Y)`` takes observation times and an (n, p) array of observations,
one column per process; ``predict(t)`` returns the fitted canonical
parameters at new times in the original time units.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_observations, check_times, resolve_families
from .basis import make_bspline_basis
from .collocation import SmoothConfig, fit_grade, fit_vanilla, smooth_processes
from .exceptions import DomainError, InvalidConfigurationError
from .model import ObservationSet
from .penalties import Penalty
from .profiling import TuningConfig, fit_hdgp

_METHODS = ("hdgp", "vanilla", "grade")


class SparseLinearODE(BaseEstimator):
    """Sparse linear ODE system ``theta' = b + A theta`` for exponential-family data.

    Parameters mirror :class:`~sparse_ode.profiling.TuningConfig`; ``method``
    picks generalised profiling (``"hdgp"``) or one of the two-step baselines.
    After fitting, ``coef_`` is ``A`` and ``intercept_`` is ``b``, both in the
    original time units.
    """

    def __init__(self, method="hdgp", penalty="lasso", scad_a=3.7, families="auto",
                 spline_order=6, lambda_gamma_grid=None, lambda_theta_init=1.0,
                 delta_init=10.0, fidelity_change_threshold=0.10, gamma_tol=1e-4,
                 threshold_factor=0.01, mode="gauss_seidel", bic_scale="normalized",
                 warm_start=False):
        self.method = method
        self.penalty = penalty
        self.scad_a = scad_a
        self.families = families
        self.spline_order = spline_order
        self.lambda_gamma_grid = lambda_gamma_grid
        self.lambda_theta_init = lambda_theta_init
        self.delta_init = delta_init
        self.fidelity_change_threshold = fidelity_change_threshold
        self.gamma_tol = gamma_tol
        self.threshold_factor = threshold_factor
        self.mode = mode
        self.bic_scale = bic_scale
        self.warm_start = warm_start

    def _tuning(self) -> TuningConfig:
        grid = None if self.lambda_gamma_grid is None else sorted(self.lambda_gamma_grid,
                                                                 reverse=True)
        return TuningConfig(
            lambda_theta_init=self.lambda_theta_init, delta_init=self.delta_init,
            fidelity_change_threshold=self.fidelity_change_threshold,
            gamma_tol=self.gamma_tol, lambda_gamma_grid=grid,
            threshold_factor=self.threshold_factor, mode=self.mode,
            bic_scale=self.bic_scale, warm_start=self.warm_start)

    def fit(self, t, Y):
        if self.method not in _METHODS:
            raise InvalidConfigurationError(f"method must be one of {_METHODS}")
        t = check_times(t)
        Y = check_observations(Y, t.size)
        data = ObservationSet.from_raw(t, Y, resolve_families(self.families, Y))
        pen = Penalty(self.penalty, 0.0, self.scad_a)
        basis = make_bspline_basis(data.n, self.spline_order)
        if self.method == "hdgp":
            result = fit_hdgp(data, self._tuning(), pen, basis)
        else:
            smooth = smooth_processes(data, SmoothConfig(basis))
            grid = None if self.lambda_gamma_grid is None else list(self.lambda_gamma_grid)
            runner = fit_vanilla if self.method == "vanilla" else fit_grade
            result = runner(data, basis, pen, lambda_gamma_grid=grid, smooth=smooth,
                            bic_scale=self.bic_scale)
        self.result_ = result
        self.data_ = data
        self.n_features_in_ = data.p
        self.time_offset_ = data.time_offset
        self.time_scale_ = data.time_scale
        gamma = result.gamma_hat.gamma / data.time_scale
        self.intercept_ = gamma[:, 0]
        self.coef_ = gamma[:, 1:]
        return self

    def _rescale(self, t) -> np.ndarray:
        check_is_fitted(self, "result_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = (t - self.time_offset_) / self.time_scale_
        tol = 1e-12
        if np.any(s < -tol) or np.any(s > 1 + tol):
            raise DomainError("prediction times must lie within the fitted time range")
        return np.clip(s, 0.0, 1.0)

    def predict(self, t) -> np.ndarray:
        """Fitted canonical parameters, shape (len(t), p)."""
        return self.result_.fit.values(self._rescale(t))

    def predict_derivative(self, t) -> np.ndarray:
        return self.result_.fit.values(self._rescale(t), 1) / self.time_scale_

    def predict_mean(self, t) -> np.ndarray:
        """Expected observations ``b'(theta(t))``."""
        theta = self.predict(t)
        return np.column_stack([fam.mean(theta[:, j])
                                for j, fam in enumerate(self.data_.families)])

    @property
    def support_(self) -> np.ndarray:
        return self.coef_ != 0
