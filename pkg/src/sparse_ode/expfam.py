"""Exponential families with canonical link.

Dispersion is fixed at one in every criterion; the Gaussian ``sigma`` only
drives data generation.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .exceptions import InvalidConfigurationError, InvalidDataError


class Family:
    name = "family"

    def cumulant(self, theta, deriv=0):
        raise NotImplementedError

    def mean(self, theta):
        return self.cumulant(theta, 1)

    def variance(self, theta):
        return self.cumulant(theta, 2)

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InvalidDataError(f"{self.name} observations must be finite")
        return y

    def sample(self, theta, rng):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(vars(self).items()))))


class Gaussian(Family):
    name = "gaussian"

    def __init__(self, sigma=1.0):
        if not sigma >= 0:
            raise InvalidConfigurationError("Gaussian sigma must be positive")
        self.sigma = float(sigma)

    def cumulant(self, theta, deriv=0):
        theta = np.asarray(theta, dtype=float)
        if deriv == 0:
            return 0.5 * theta ** 2
        if deriv == 1:
            return theta.copy() if theta.ndim else theta
        return np.ones_like(theta)

    def sample(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        if self.sigma == 0:
            return theta.copy()
        return rng.normal(theta, self.sigma)

    def __repr__(self):
        return f"Gaussian(sigma={self.sigma!r})"


class Poisson(Family):
    name = "poisson"

    def cumulant(self, theta, deriv=0):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(theta, dtype=float))

    def check_y(self, y):
        y = super().check_y(y)
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise InvalidDataError("Poisson observations must be nonnegative integers")
        return y

    def sample(self, theta, rng):
        return rng.poisson(np.exp(np.asarray(theta, dtype=float))).astype(float)


class Bernoulli(Family):
    name = "bernoulli"

    def cumulant(self, theta, deriv=0):
        theta = np.asarray(theta, dtype=float)
        if deriv == 0:
            return np.logaddexp(0.0, theta)
        mu = expit(theta)
        if deriv == 1:
            return mu
        return mu * (1.0 - mu)

    def check_y(self, y):
        y = super().check_y(y)
        if np.any((y != 0) & (y != 1)):
            raise InvalidDataError("Bernoulli observations must be 0 or 1")
        return y

    def sample(self, theta, rng):
        p = expit(np.asarray(theta, dtype=float))
        return (rng.random(p.shape) < p).astype(float)


FAMILIES = {"gaussian": Gaussian, "poisson": Poisson, "bernoulli": Bernoulli}


def get_family(family) -> Family:
    """Accept a Family instance or one of 'gaussian', 'poisson', 'bernoulli'."""
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[str(family).lower()]()
    except KeyError:
        raise InvalidConfigurationError(
            f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None


def cumulant(family, theta, deriv=0):
    if deriv not in (0, 1, 2):
        raise ValueError("deriv must be 0, 1 or 2")
    return get_family(family).cumulant(theta, deriv)


def neg_loglik(family, y, theta) -> float:
    """Average negative log-likelihood ``-(1/n) sum(y theta - b(theta))``."""
    family = get_family(family)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if y.shape != theta.shape:
        raise InvalidDataError(f"length mismatch: y{y.shape} vs theta{theta.shape}")
    y = family.check_y(y)
    return float(-np.mean(y * theta - family.cumulant(theta, 0)))


def sample(family, theta, seed=None) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return get_family(family).sample(theta, rng)
