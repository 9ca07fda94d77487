"""Inner criterion: ODE-penalised likelihood for one process's basis coefficients.

For process j with structural row ``gamma_j`` the criterion is

    G_j(c) = -(1/n) sum_i {y_i h(t_i)'c - b(h(t_i)'c)}
             + lambda_theta * int (c'h'(t) - gamma_j0 - sum_k gamma_jk theta_k(t))^2 dt

where theta_j inside the integral is ``c'h`` and the other processes are held
at their current fits. It is convex in ``c``; Newton's method with step
halving solves it, and the implicit function theorem gives ``dc*/dgamma_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .basis import BasisEval, banded_to_dense, sym_gram_banded
from .exceptions import ConvergenceFailure, InvalidConfigurationError
from .expfam import Family, get_family
from .model import ProcessFit

RIDGE = 1e-10


def factor_banded(ab: np.ndarray):
    """Cholesky factor of an upper-band SPD matrix, retrying once with a ridge."""
    try:
        return cholesky_banded(ab, lower=False), False
    except LinAlgError:
        ridged = ab.copy()
        ridged[-1] += RIDGE * max(1.0, float(np.abs(ab[-1]).max()))
        return cholesky_banded(ridged, lower=False), True


def solve_banded_spd(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    factor, _ = factor_banded(ab)
    return cho_solve_banded((factor, False), rhs)


@dataclass(eq=False)
class InnerProblem:
    j: int
    y: np.ndarray
    family: Family
    gamma: np.ndarray
    others: ProcessFit
    lambda_theta: float
    times: np.ndarray
    obs: BasisEval | None = None

    def __post_init__(self):
        self.family = get_family(self.family)
        self.y = np.asarray(self.y, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.shape != (self.others.p + 1,):
            raise InvalidConfigurationError(
                f"gamma_j must have {self.others.p + 1} entries, got {self.gamma.shape}")
        if not np.all(np.isfinite(self.gamma)):
            raise InvalidConfigurationError("gamma_j must be finite")
        if self.lambda_theta < 0:
            raise InvalidConfigurationError("lambda_theta must be nonnegative")
        if self.obs is None:
            self.obs = self.basis.evaluate(self.times)

    @property
    def basis(self):
        return self.others.basis

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def self_weight(self) -> float:
        return float(self.gamma[1 + self.j])

    @cached_property
    def theta_nodes(self) -> np.ndarray:
        """Current fits of all processes at the quadrature nodes."""
        return self.basis.quad_values @ self.others.coef

    @cached_property
    def drive(self) -> np.ndarray:
        """Part of the right-hand side that does not involve theta_j."""
        g = self.gamma
        return g[0] + self.theta_nodes @ g[1:] - self.self_weight * self.theta_nodes[:, self.j]

    @cached_property
    def penalty_band(self) -> np.ndarray:
        """Band of ``2 lambda int (h' - g_jj h)(h' - g_jj h)^T``."""
        gram = self.basis.gram
        gjj = self.self_weight
        return 2.0 * self.lambda_theta * (gram["dd"] - gjj * gram["vd"] + gjj ** 2 * gram["vv"])

    def _apply_operator_T(self, v):
        """``(h' - g_jj h)^T`` applied to node values ``v``, weighted by quadrature."""
        b = self.basis
        wv = (b.quadrature.weights * v.T).T
        return b.quad_derivs.rmatvec(wv) - self.self_weight * b.quad_values.rmatvec(wv)

    def theta_obs(self, c) -> np.ndarray:
        return self.obs @ c

    def residual(self, c) -> np.ndarray:
        b = self.basis
        return b.quad_derivs @ c - self.self_weight * (b.quad_values @ c) - self.drive

    def value(self, c) -> float:
        theta = self.theta_obs(c)
        with np.errstate(over="ignore", invalid="ignore"):
            nll = -np.mean(self.y * theta - self.family.cumulant(theta, 0))
        r = self.residual(c)
        return float(nll + self.lambda_theta * (self.basis.quadrature.weights @ r ** 2))

    def gradient(self, c) -> np.ndarray:
        theta = self.theta_obs(c)
        g = -self.obs.rmatvec(self.y - self.family.cumulant(theta, 1)) / self.n
        if self.lambda_theta:
            g = g + 2.0 * self.lambda_theta * self._apply_operator_T(self.residual(c))
        return g

    def hessian_banded(self, c) -> np.ndarray:
        v = self.family.cumulant(self.theta_obs(c), 2) / self.n
        return sym_gram_banded(self.obs, self.obs, v) + self.penalty_band

    def mixed(self, c) -> np.ndarray:
        """``d^2 G / dc dgamma^T`` (m x (p+1)), columns ordered like ``gamma_j``."""
        lam = self.lambda_theta
        b = self.basis
        thetas = self.theta_nodes.copy()
        thetas[:, self.j] = b.quad_values @ c
        V = np.column_stack([np.ones(thetas.shape[0]), thetas])
        M = -2.0 * lam * self._apply_operator_T(V)
        r = self.residual(c)
        M[:, 1 + self.j] -= 2.0 * lam * b.quad_values.rmatvec(b.quadrature.weights * r)
        return M


def g_value(problem: InnerProblem, c) -> float:
    return problem.value(np.asarray(c, dtype=float))


def g_gradient(problem: InnerProblem, c) -> np.ndarray:
    return problem.gradient(np.asarray(c, dtype=float))


def g_hessian(problem: InnerProblem, c) -> np.ndarray:
    return banded_to_dense(problem.hessian_banded(np.asarray(c, dtype=float)))


def newton_minimize(problem, c0, xtol=1e-8, gtol=1e-6, max_iter=100):
    """Damped Newton for a convex objective exposing value/gradient/hessian_banded.

    A step is accepted only if it does not increase the objective; it is halved
    up to 40 times otherwise.
    """
    c = np.array(c0, dtype=float)
    f = problem.value(c)
    if not np.isfinite(f):
        raise ConvergenceFailure("objective is not finite at the starting point", last=c)
    small_step = False
    for _ in range(max_iter):
        g = problem.gradient(c)
        gnorm = np.abs(g).max()
        if gnorm <= 1e-12 or (small_step and gnorm <= gtol):
            break
        factor, _ = factor_banded(problem.hessian_banded(c))
        step = -cho_solve_banded((factor, False), g)
        t = 1.0
        any_finite = False
        for _ in range(40):
            trial = c + t * step
            f_trial = problem.value(trial)
            if np.isfinite(f_trial):
                any_finite = True
                if f_trial <= f:
                    break
            t *= 0.5
        else:
            if not any_finite:
                raise ConvergenceFailure("objective not finite along the Newton direction",
                                         last=c)
            # no descent left at working precision
            break
        c, f = trial, f_trial
        small_step = np.abs(t * step).max() <= xtol
    return c


def solve_inner(problem: InnerProblem, c_init=None, xtol=1e-8, max_iter=100) -> np.ndarray:
    if c_init is None:
        c_init = problem.others.coef[:, problem.j]
    return newton_minimize(problem, c_init, xtol=xtol, max_iter=max_iter)


def dc_dgamma(problem: InnerProblem, c_star) -> np.ndarray:
    """Implicit derivative ``-(d2G/dc dc^T)^{-1} d2G/dc dgamma^T`` at ``c_star``."""
    c_star = np.asarray(c_star, dtype=float)
    if problem.lambda_theta == 0:
        return np.zeros((c_star.size, problem.gamma.size))
    return -solve_banded_spd(problem.hessian_banded(c_star), problem.mixed(c_star))
