"""Generalised profiling driver: block sweeps, lambda_theta schedule and BIC path."""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import BasisEval, BasisSystem, make_bspline_basis
from .collocation import SmoothConfig, smooth_processes_with_lambdas
from .exceptions import (ConvergenceFailure, FitFailure, InvalidConfigurationError,
                         NumericError)
from .inner import InnerProblem, dc_dgamma, solve_inner
from .model import ObservationSet, ProcessFit, StructuralParams, ode_fidelity
from .outer import linearized_design, outer_step, working_response
from .penalties import Penalty
from .results import BIC_SCALES, FitResult, bic_value, lambda_grid

log = logging.getLogger(__name__)

INIT_RIDGE = 1e-6
STALL_PROGRESS = 0.9


class PlateauWarning(RuntimeWarning):
    """The lambda_theta schedule stopped because its multiplier became too small."""


@dataclass
class TuningConfig:
    lambda_theta_init: float = 1.0
    delta_init: float = 10.0
    fidelity_change_threshold: float = 0.10
    gamma_tol: float = 1e-4
    lambda_gamma_grid: Sequence[float] | None = None
    max_outer_sweeps: int = 200
    stall_sweeps: int = 20
    threshold_factor: float = 0.01
    mode: str = "gauss_seidel"
    max_block_repeats: int = 50
    max_stages: int = 30
    bic_scale: str = "normalized"
    n_lambda_gamma: int = 8
    lambda_gamma_ratio: float = 1e-3
    warm_start: bool = False

    def __post_init__(self):
        if not self.lambda_theta_init > 0:
            raise InvalidConfigurationError("lambda_theta_init must be positive")
        if not self.delta_init > 1:
            raise InvalidConfigurationError("delta_init must exceed 1")
        if not 0 < self.fidelity_change_threshold < 1:
            raise InvalidConfigurationError("fidelity_change_threshold must be in (0, 1)")
        if not self.gamma_tol > 0:
            raise InvalidConfigurationError("gamma_tol must be positive")
        if self.mode not in ("gauss_seidel", "jacobi"):
            raise InvalidConfigurationError(f"unknown sweep mode {self.mode!r}")
        if self.bic_scale not in BIC_SCALES:
            raise InvalidConfigurationError(f"unknown BIC scale {self.bic_scale!r}")
        if self.threshold_factor < 0:
            raise InvalidConfigurationError("threshold_factor must be nonnegative")
        if min(self.max_outer_sweeps, self.max_block_repeats, self.max_stages,
               self.stall_sweeps) < 1:
            raise InvalidConfigurationError("iteration limits must be positive")
        if self.lambda_gamma_grid is not None:
            grid = [float(v) for v in self.lambda_gamma_grid]
            if not grid or any(v < 0 for v in grid):
                raise InvalidConfigurationError("lambda_gamma_grid must be nonempty and nonnegative")
            if any(a < b for a, b in zip(grid, grid[1:])):
                raise InvalidConfigurationError("lambda_gamma_grid must be sorted descending")
            self.lambda_gamma_grid = grid

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProfileState:
    data: ObservationSet
    basis: BasisSystem
    obs: BasisEval
    fit: ProcessFit
    gamma: StructuralParams
    lambda_theta: float

    def replace(self, **changes) -> "ProfileState":
        return replace(self, **changes)


@dataclass
class SweepLog:
    """What happened during one sweep over all equations."""

    h_steps: list = field(default_factory=list)      # (j, H before, H after, halvings)
    failures: dict = field(default_factory=dict)      # j -> message
    gamma_change: float = 0.0


def _ridge_gamma(fit: ProcessFit) -> StructuralParams:
    b = fit.basis
    w = b.quadrature.weights
    X = np.column_stack([np.ones(w.size), b.quad_values @ fit.coef])
    Z = b.quad_derivs @ fit.coef
    A = X.T @ (w[:, None] * X)
    A[1:, 1:] += INIT_RIDGE * np.eye(fit.p)
    return StructuralParams(np.linalg.solve(A, X.T @ (w[:, None] * Z)).T)


def initialize(data: ObservationSet, basis: BasisSystem,
               smooth: SmoothConfig | ProcessFit | None = None):
    """Smoothing-spline fits and a ridge regression of their derivatives on them.

    A precomputed :class:`ProcessFit` may be passed as ``smooth`` to skip smoothing.
    """
    if isinstance(smooth, ProcessFit):
        return smooth, _ridge_gamma(smooth)
    fit, _ = smooth_processes_with_lambdas(data, smooth or SmoothConfig(basis))
    return fit, _ridge_gamma(fit)


def _inner(state: ProfileState, j: int, gamma_j) -> np.ndarray:
    data = state.data
    problem = InnerProblem(j, data.y[:, j], data.families[j], gamma_j, state.fit,
                           state.lambda_theta, data.times, obs=state.obs)
    return solve_inner(problem, state.fit.coef[:, j])


def _update_block(state: ProfileState, j: int, pen: Penalty, cfg: TuningConfig, slog: SweepLog):
    """Alternate inner solves and outer steps for equation j; returns (row, coef)."""
    row = np.array(state.gamma.gamma[j])
    local = state.replace(fit=state.fit.with_column(j, _inner(state, j, row)))
    for _ in range(cfg.max_block_repeats):
        step = outer_step(j, local, pen)
        slog.h_steps.append((j, step.h_previous, step.h_value, step.halvings))
        change = np.abs(step.gamma - local.gamma.gamma[j]).max()
        local = local.replace(gamma=local.gamma.with_row(j, step.gamma),
                              fit=local.fit.with_column(j, step.coef))
        if change <= cfg.gamma_tol:
            break
    return local.gamma.gamma[j], local.fit.coef[:, j]


def sweep(state: ProfileState, lambda_theta: float, pen: Penalty, cfg: TuningConfig,
          slog: SweepLog | None = None) -> ProfileState:
    """One pass over all equations, Gauss-Seidel or Jacobi."""
    slog = SweepLog() if slog is None else slog
    state = state.replace(lambda_theta=float(lambda_theta))
    start = state.gamma.gamma
    snapshot = state
    rows, cols = {}, {}
    for j in range(state.data.p):
        source = snapshot if cfg.mode == "jacobi" else state
        try:
            row, coef = _update_block(source, j, pen, cfg, slog)
        except (ConvergenceFailure, NumericError, np.linalg.LinAlgError) as exc:
            slog.failures[j] = str(exc)
            continue
        if cfg.mode == "jacobi":
            rows[j], cols[j] = row, coef
        else:
            state = state.replace(gamma=state.gamma.with_row(j, row),
                                  fit=state.fit.with_column(j, coef))
    if cfg.mode == "jacobi":
        g, c = state.gamma.gamma.copy(), state.fit.coef.copy()
        for j in rows:
            g[j], c[:, j] = rows[j], cols[j]
        state = state.replace(gamma=StructuralParams(g), fit=ProcessFit(state.basis, c))
    slog.gamma_change = float(np.abs(state.gamma.gamma - start).max())
    return state


def _converge(state: ProfileState, pen: Penalty, cfg: TuningConfig, records: list):
    """Sweep until Gamma settles, the sweep budget runs out, or the sweeps stall.

    Equations are updated against each other's latest fits, so there is no
    joint objective and a nonconvex penalty can make rows cycle between
    basins. A run of ``stall_sweeps`` sweeps that fail to cut the smallest
    change so far by ``STALL_PROGRESS`` ends the stage; its last record is
    flagged ``stalled``.
    """
    best, since_best = np.inf, 0
    for _ in range(cfg.max_outer_sweeps):
        slog = SweepLog()
        state = sweep(state, state.lambda_theta, pen, cfg, slog)
        rec = {
            "lambda_theta": state.lambda_theta,
            "gamma_change": slog.gamma_change,
            "fidelity": ode_fidelity(state.fit, state.gamma),
            "h_steps": slog.h_steps,
            "failures": slog.failures,
        }
        records.append(rec)
        if slog.gamma_change <= cfg.gamma_tol:
            break
        if slog.gamma_change < STALL_PROGRESS * best:
            best, since_best = slog.gamma_change, 0
        else:
            since_best += 1
            if since_best >= cfg.stall_sweeps:
                rec["stalled"] = True
                log.debug("sweeps stalled at lambda_theta=%.3g", state.lambda_theta)
                break
    return state


def _stalled(records: list) -> bool:
    return bool(records and records[-1].get("stalled"))


def select_lambda_theta(state: ProfileState, cfg: TuningConfig, pen: Penalty,
                        records: list | None = None):
    """Increase lambda_theta while the ODE fidelity keeps changing slowly.

    Each stage starts from the previous accepted estimate. A stage whose
    fidelity changed by at least the threshold (relative) is rejected and
    retried with a halved multiplier. Stops once a stage, accepted or not,
    moves Gamma by no more than ``gamma_tol``, or once a stage's sweeps stall
    (Gamma would not settle at a larger lambda_theta either).

    Returns (final lambda_theta, state, stages) where ``stages`` lists every
    accepted or rejected stage.
    """
    records = [] if records is None else records
    lam = cfg.lambda_theta_init
    delta = cfg.delta_init
    state = _converge(state.replace(lambda_theta=lam), pen, cfg, records)
    fid = ode_fidelity(state.fit, state.gamma)
    stages = [{"lambda_theta": lam, "delta": None, "fidelity": fid, "accepted": True,
               "gamma_change": None, "stalled": _stalled(records)}]
    for _ in range(cfg.max_stages - 1):
        if stages[-1]["stalled"]:
            break
        if delta < 1.01:
            warnings.warn("lambda_theta multiplier fell below 1.01; declaring a plateau",
                          PlateauWarning, stacklevel=2)
            stages[-1]["plateau"] = True
            break
        trial_lam = lam * delta
        trial = _converge(state.replace(lambda_theta=trial_lam), pen, cfg, records)
        trial_fid = ode_fidelity(trial.fit, trial.gamma)
        rel = abs(trial_fid - fid) / max(fid, 1e-300)
        change = float(np.abs(trial.gamma.gamma - state.gamma.gamma).max())
        accepted = rel < cfg.fidelity_change_threshold
        stages.append({"lambda_theta": trial_lam, "delta": delta, "fidelity": trial_fid,
                       "accepted": bool(accepted), "gamma_change": change,
                       "stalled": _stalled(records)})
        if accepted:
            lam, state, fid = trial_lam, trial, trial_fid
        else:
            delta /= 2.0
        if change <= cfg.gamma_tol:
            break
    return lam, state, stages


def bic(data: ObservationSet, fit: ProcessFit, gamma_hat: StructuralParams,
        scale: str = "printed") -> float:
    theta_obs = fit.values(data.times)
    return bic_value(data, theta_obs, int(np.count_nonzero(gamma_hat.interactions)), scale)


def threshold_gamma(gamma_hat: StructuralParams, gamma_init: StructuralParams,
                    factor: float) -> StructuralParams:
    """Zero interactions smaller than ``factor * rms(initial interactions)``."""
    cut = factor * float(np.sqrt(np.mean(gamma_init.interactions ** 2)))
    g = gamma_hat.gamma.copy()
    inter = g[:, 1:]
    inter[np.abs(inter) < cut] = 0.0
    return StructuralParams(g)


def lambda_gamma_max(state: ProfileState) -> float:
    """Smallest lambda_gamma at which zero interactions are stationary for every
    linearised outer problem, evaluated with interactions removed."""
    data = state.data
    top = 0.0
    for j in range(data.p):
        row = np.zeros(data.p + 1)
        row[0] = state.gamma.gamma[j, 0]
        problem = InnerProblem(j, data.y[:, j], data.families[j], row, state.fit,
                               state.lambda_theta, data.times, obs=state.obs)
        c = solve_inner(problem, state.fit.coef[:, j])
        X, offset = linearized_design(problem, c, dc_dgamma(problem, c))
        ytilde, w = working_response(problem.family, problem.y, offset)
        grad = X[:, 1:].T @ (w * (ytilde - offset)) / data.n
        top = max(top, float(np.abs(grad).max()))
    return top


def default_lambda_grid(state: ProfileState, cfg: TuningConfig) -> np.ndarray:
    return lambda_grid(lambda_gamma_max(state), cfg.n_lambda_gamma, cfg.lambda_gamma_ratio)


def fit_hdgp(data: ObservationSet, cfg: TuningConfig | None = None, pen: Penalty | None = None,
             basis: BasisSystem | None = None,
             smooth: SmoothConfig | ProcessFit | None = None) -> FitResult:
    """Sparse linear ODE estimate by generalised profiling with a BIC-chosen lambda_gamma."""
    cfg = cfg or TuningConfig()
    pen = pen or Penalty("lasso")
    if basis is None:
        has_basis = isinstance(smooth, (ProcessFit, SmoothConfig))
        basis = smooth.basis if has_basis else make_bspline_basis(data.n)
    fit0, gamma0 = initialize(data, basis, smooth)
    state = ProfileState(data, basis, basis.evaluate(data.times), fit0, gamma0,
                         cfg.lambda_theta_init)
    start = state
    grid = cfg.lambda_gamma_grid
    if grid is None:
        grid = default_lambda_grid(state, cfg)

    path, failures = [], {}
    best = None
    for lam_g in grid:
        records: list = []
        if not cfg.warm_start:
            state = start
        try:
            lam_t, new_state, stages = select_lambda_theta(state, cfg, pen.with_lambda(lam_g),
                                                           records)
        except (ConvergenceFailure, NumericError, np.linalg.LinAlgError) as exc:
            failures[float(lam_g)] = str(exc)
            continue
        state = new_state
        fid = ode_fidelity(state.fit, state.gamma)
        g_hat = threshold_gamma(state.gamma, gamma0, cfg.threshold_factor)
        score = bic(data, state.fit, g_hat, cfg.bic_scale)
        entry = {"lambda_gamma": float(lam_g), "lambda_theta": lam_t, "bic": score,
                 "fidelity": fid, "k": int(np.count_nonzero(g_hat.interactions)),
                 "stages": stages, "sweeps": records, "gamma": g_hat.gamma.tolist()}
        path.append(entry)
        log.debug("lambda_gamma=%.3g lambda_theta=%.3g k=%d bic=%.6g", lam_g, lam_t,
                  entry["k"], score)
        if best is None or score < best[0]:
            best = (score, float(lam_g), lam_t, g_hat, state.fit, fid, state.gamma)
    if best is None:
        raise FitFailure("profiling failed for every lambda_gamma", failures)
    score, lam_g, lam_t, g_hat, fit, fid, g_raw = best
    return FitResult(
        gamma_hat=g_hat, fit=fit, lambda_theta_final=lam_t, lambda_gamma=lam_g,
        bic=score, fidelity=fid, trace=path,
        info={"method": "hdgp", "gamma_init": gamma0.gamma.tolist(),
              "gamma_unthresholded": g_raw.gamma.tolist(),
              "threshold": cfg.threshold_factor * float(np.sqrt(np.mean(gamma0.interactions ** 2))),
              "failures": failures, "config": cfg.to_dict(), "penalty": asdict(pen)},
    )
