"""Outer update of one structural row via linearisation and penalised IRLS."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .expfam import get_family
from .inner import InnerProblem, dc_dgamma, solve_inner
from .penalties import Penalty, penalty_value, scalar_update

WEIGHT_FLOOR = 1e-10


@dataclass
class WorkingSet:
    ytilde: np.ndarray
    w: np.ndarray
    X: np.ndarray
    offset: np.ndarray


def working_response(family, y, theta_tilde):
    """IRLS working response and weights at the expansion point ``theta_tilde``."""
    family = get_family(family)
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    u = family.cumulant(theta_tilde, 1) - np.asarray(y, dtype=float)
    w = np.maximum(family.cumulant(theta_tilde, 2), WEIGHT_FLOOR)
    return theta_tilde - u / w, w


def linearized_design(problem: InnerProblem, c_star, J):
    """Rows ``d theta_j(t_i) / d gamma_j`` and the fitted values at the expansion point."""
    X = problem.obs @ J
    offset = problem.obs @ np.asarray(c_star, dtype=float)
    return X, offset


def penalized_wls(X, offset, ytilde, w, pen: Penalty, unpenalized=(0,), gamma_init=None,
                  center=None, tol=1e-8, max_sweeps=10_000):
    """Cyclic coordinate descent for

        (1/2n) sum_i w_i (ytilde_i - offset_i - X_i (g - center))^2 + sum_{k not in U} p(|g_k|)

    ``center`` defaults to zero. Returns the coefficient vector; a
    ``ConvergenceWarning`` is emitted if ``max_sweeps`` is exhausted.
    """
    X = np.asarray(X, dtype=float)
    n, q = X.shape
    w = np.asarray(w, dtype=float)
    center = np.zeros(q) if center is None else np.asarray(center, dtype=float)
    gamma = np.zeros(q) if gamma_init is None else np.array(gamma_init, dtype=float)
    z = np.asarray(ytilde, dtype=float) - np.asarray(offset, dtype=float) + X @ center
    G = X.T @ (w[:, None] * X) / n
    rhs = X.T @ (w * z) / n
    free = np.zeros(q, dtype=bool)
    free[list(unpenalized)] = True
    diag = np.diag(G).copy()
    scale = max(float(diag.max(initial=0.0)), 1e-300)
    # Lists keep the per-coordinate loop free of numpy scalar overhead.
    Gl, rl, dl, g = G.tolist(), rhs.tolist(), diag.tolist(), gamma.tolist()
    Gg = (G @ gamma).tolist()
    span = range(q)
    for _ in range(max_sweeps):
        biggest = 0.0
        for k in span:
            a = dl[k]
            old = g[k]
            if a <= 1e-14 * scale:
                new = old if free[k] else 0.0
            else:
                zk = old + (rl[k] - Gg[k]) / a
                new = zk if free[k] else scalar_update(pen, zk, a)
            if new != old:
                g[k] = new
                delta = new - old
                col = Gl[k]
                for i in span:
                    Gg[i] += col[i] * delta
                biggest = max(biggest, abs(delta))
        if biggest <= tol:
            break
    else:
        warnings.warn(f"coordinate descent did not converge in {max_sweeps} sweeps",
                      ConvergenceWarning, stacklevel=2)
    return np.array(g)


def wls_objective(X, offset, ytilde, w, pen, gamma, unpenalized=(0,), center=None):
    X = np.asarray(X, dtype=float)
    center = np.zeros(X.shape[1]) if center is None else center
    r = ytilde - offset - X @ (np.asarray(gamma) - center)
    mask = np.ones(X.shape[1], dtype=bool)
    mask[list(unpenalized)] = False
    return float(0.5 * np.mean(w * r ** 2) + penalty_value(pen, np.asarray(gamma)[mask]))


class OuterStep(NamedTuple):
    gamma: np.ndarray
    h_value: float
    coef: np.ndarray
    h_previous: float
    halvings: int


def _problem(j, gamma_j, state) -> InnerProblem:
    data = state.data
    return InnerProblem(j, data.y[:, j], data.families[j], gamma_j, state.fit,
                        state.lambda_theta, data.times, obs=state.obs)


def _h(problem: InnerProblem, c, pen: Penalty) -> float:
    theta = problem.theta_obs(c)
    nll = -np.mean(problem.y * theta - problem.family.cumulant(theta, 0))
    return float(nll + penalty_value(pen, problem.gamma[1:]))


def h_value(j, gamma_j, state, pen: Penalty, c_init=None) -> float:
    """Outer criterion: likelihood of the inner fit at ``gamma_j`` plus its penalty."""
    problem = _problem(j, np.asarray(gamma_j, dtype=float), state)
    c = solve_inner(problem, c_init)
    return _h(problem, c, pen)


def outer_step(j, state, pen: Penalty, max_halvings=10) -> OuterStep:
    """One linearised IRLS update of ``gamma_j``.

    ``state`` must carry ``data``, ``fit``, ``gamma``, ``lambda_theta`` and
    ``obs``, with column j of ``fit`` already solving the inner problem at the
    current row. The proposed move is backtracked until the outer criterion
    does not increase; if no fraction qualifies the row is left unchanged.
    """
    g_tilde = np.array(state.gamma.gamma[j], dtype=float)
    problem = _problem(j, g_tilde, state)
    c_star = np.array(state.fit.coef[:, j])
    h_old = _h(problem, c_star, pen)

    J = dc_dgamma(problem, c_star)
    X, offset = linearized_design(problem, c_star, J)
    ytilde, w = working_response(problem.family, problem.y, offset)
    proposal = penalized_wls(X, offset, ytilde, w, pen, unpenalized=(0,),
                             gamma_init=g_tilde, center=g_tilde)
    direction = proposal - g_tilde
    if not np.any(direction):
        return OuterStep(g_tilde, h_old, c_star, h_old, 0)

    frac = 1.0
    for halvings in range(max_halvings + 1):
        trial = g_tilde + frac * direction
        trial_problem = _problem(j, trial, state)
        c_trial = solve_inner(trial_problem, c_star)
        h_trial = _h(trial_problem, c_trial, pen)
        if h_trial <= h_old + 1e-12 * max(1.0, abs(h_old)):
            return OuterStep(trial, h_trial, c_trial, h_old, halvings)
        frac *= 0.5
    return OuterStep(g_tilde, h_old, c_star, h_old, max_halvings + 1)
