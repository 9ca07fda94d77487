"""Records for the linear ODE system, its observations and spline fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import BasisSystem
from .exceptions import InvalidDataError
from .expfam import Family, get_family


@dataclass(frozen=True)
class StructuralParams:
    """``gamma[j] = (intercept_j, gamma_j1, ..., gamma_jp)`` for the system
    ``theta_j' = intercept_j + sum_k gamma_jk theta_k``."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[1] != g.shape[0] + 1:
            raise InvalidDataError(f"gamma must be p x (p+1), got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidDataError("gamma must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def zeros(cls, p: int) -> "StructuralParams":
        return cls(np.zeros((p, p + 1)))

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def intercepts(self) -> np.ndarray:
        return self.gamma[:, 0]

    @property
    def interactions(self) -> np.ndarray:
        return self.gamma[:, 1:]

    @property
    def support(self) -> np.ndarray:
        """Boolean p x p mask of nonzero interactions (row j driven by column k)."""
        return self.interactions != 0

    def with_row(self, j: int, row) -> "StructuralParams":
        g = self.gamma.copy()
        g[j] = row
        return StructuralParams(g)


@dataclass(frozen=True)
class ObservationSet:
    """Observations on the rescaled time axis [0, 1].

    Original time is ``time_offset + time_scale * times``.
    """

    times: np.ndarray
    y: np.ndarray
    families: tuple
    time_offset: float = 0.0
    time_scale: float = 1.0
    names: tuple = field(default=())

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if t.ndim != 1 or y.shape[0] != t.size:
            raise InvalidDataError(f"times has {t.size} entries but y has shape {y.shape}")
        if np.any(np.diff(t) <= 0):
            raise InvalidDataError("times must be strictly increasing")
        if t.size and (t[0] < 0 or t[-1] > 1):
            raise InvalidDataError("times must lie in [0, 1]; use from_raw to rescale")
        fams = self.families
        if isinstance(fams, (str, Family)):
            fams = [fams] * y.shape[1]
        fams = tuple(get_family(f) for f in fams)
        if len(fams) != y.shape[1]:
            raise InvalidDataError(f"{len(fams)} families given for {y.shape[1]} processes")
        for j, fam in enumerate(fams):
            fam.check_y(y[:, j])
        names = tuple(self.names) or tuple(f"x{j + 1}" for j in range(y.shape[1]))
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_raw(cls, times, y, families, names: Sequence[str] = ()) -> "ObservationSet":
        """Rescale arbitrary increasing times affinely onto [0, 1]."""
        t = np.asarray(times, dtype=float)
        offset = float(t[0])
        scale = float(t[-1] - t[0]) or 1.0
        return cls((t - offset) / scale, y, families, offset, scale, tuple(names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True, eq=False)
class ProcessFit:
    """Basis coefficients, column j giving ``theta_j(t) = coef[:, j] @ h(t)``."""

    basis: BasisSystem
    coef: np.ndarray

    def __post_init__(self):
        c = np.array(self.coef, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != self.basis.n_basis:
            raise InvalidDataError(
                f"coef has {c.shape[0]} rows, basis has {self.basis.n_basis} functions")
        if not np.all(np.isfinite(c)):
            raise InvalidDataError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    @property
    def p(self) -> int:
        return self.coef.shape[1]

    def values(self, t, deriv: int = 0) -> np.ndarray:
        return self.basis.evaluate(t, deriv) @ self.coef

    def with_column(self, j: int, c) -> "ProcessFit":
        coef = self.coef.copy()
        coef[:, j] = c
        return ProcessFit(self.basis, coef)


def ode_rhs(gamma: StructuralParams, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != gamma.p:
        raise InvalidDataError(f"theta has {theta.shape[-1]} entries, system has {gamma.p}")
    return gamma.intercepts + theta @ gamma.interactions.T


def ode_residuals(fit: ProcessFit, gamma: StructuralParams) -> np.ndarray:
    """``theta_j'(s) - rhs_j(s)`` at every quadrature node (nodes x p)."""
    basis = fit.basis
    theta = basis.quad_values @ fit.coef
    dtheta = basis.quad_derivs @ fit.coef
    return dtheta - ode_rhs(gamma, theta)


def ode_fidelity(fit: ProcessFit, gamma: StructuralParams) -> float:
    """Aggregated squared ODE residual ``sum_j int_0^1 r_j(t)^2 dt``."""
    if fit.p != gamma.p:
        raise InvalidDataError(f"fit has {fit.p} processes, gamma has {gamma.p}")
    r = ode_residuals(fit, gamma)
    return float(fit.basis.quadrature.weights @ (r ** 2).sum(axis=1))
