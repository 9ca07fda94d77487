"""B-spline bases on [0, 1] with per-cell Gauss-Legendre quadrature.

Every evaluation is stored compactly: for each point the index of the first
nonzero basis function plus the ``order`` local values. Products of such
evaluations give banded Gram matrices, which keeps the Newton solves used
throughout the package linear in the number of basis functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, InvalidConfigurationError, NumericError

GAUSS_POINTS = 7


@dataclass(frozen=True)
class QuadratureRule:
    """Composite rule on [0, 1]; ``cell`` maps each node to its knot interval."""

    nodes: np.ndarray
    weights: np.ndarray
    cell: np.ndarray


@dataclass(frozen=True)
class BasisEval:
    """Values of all basis functions at a set of points, in local form.

    ``values[i, a]`` is basis function ``start[i] + a`` evaluated at point i;
    every other basis function vanishes there.
    """

    start: np.ndarray
    values: np.ndarray
    n_basis: int

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def order(self) -> int:
        return self.values.shape[1]

    @cached_property
    def csr(self) -> sp.csr_matrix:
        n, k = self.values.shape
        cols = self.start[:, None] + np.arange(k)
        indptr = np.arange(0, n * k + 1, k)
        return sp.csr_matrix((self.values.ravel(), cols.ravel(), indptr),
                             shape=(n, self.n_basis))

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    @cached_property
    def csr_t(self) -> sp.csr_matrix:
        return self.csr.T.tocsr()

    @cached_property
    def gram_operator(self) -> sp.csr_matrix:
        """Sparse map from point weights to the flattened band of ``E^T W E``."""
        n, k = self.values.shape
        rows, cols, vals = [], [], []
        pts = np.arange(n)
        for d in range(k):
            for a in range(k - d):
                rows.append((k - 1 - d) * self.n_basis + self.start + a + d)
                cols.append(pts)
                vals.append(self.values[:, a] * self.values[:, a + d])
        op = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(k * self.n_basis, n))
        return op.tocsr()

    def __matmul__(self, coef):
        return self.csr @ np.asarray(coef, dtype=float)

    def rmatvec(self, v):
        """``E.T @ v`` for a vector or a (points x q) matrix."""
        return self.csr_t @ np.asarray(v, dtype=float)


def sym_gram_banded(left: BasisEval, right: BasisEval, weights) -> np.ndarray:
    """Upper band of ``(L^T W R + R^T W L) / 2`` in LAPACK ``ab`` layout.

    ``left`` and ``right`` must be evaluated at the same points.
    """
    k = left.order
    m = left.n_basis
    if left is right:
        return (left.gram_operator @ np.asarray(weights, dtype=float)).reshape(k, m)
    w = np.asarray(weights, dtype=float)[:, None]
    lw, rw = left.values * w, right.values * w
    ab = np.zeros((k, m))
    for d in range(k):
        for a in range(k - d):
            b = a + d
            contrib = 0.5 * (lw[:, a] * right.values[:, b] + rw[:, a] * left.values[:, b])
            ab[k - 1 - d] += np.bincount(left.start + b, weights=contrib, minlength=m)
    return ab


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    """Expand an upper-band symmetric matrix to dense form."""
    u = ab.shape[0] - 1
    m = ab.shape[1]
    out = np.zeros((m, m))
    for d in range(u + 1):
        diag = ab[u - d, d:]
        out += np.diag(diag, d)
        if d:
            out += np.diag(diag, -d)
    return out


def _bspline_local(knots: np.ndarray, degree: int, x: np.ndarray, deriv: int):
    """Cox-de Boor recursion, vectorised over points.

    Returns the span index of each point and the ``degree + 1`` local values
    (or derivatives of order ``deriv``) of the basis functions supported on it.
    """
    n_basis = len(knots) - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    span = np.clip(span, degree, n_basis - 1)

    def local_values(p):
        N = np.zeros((x.size, p + 1))
        N[:, 0] = 1.0
        left = np.zeros((x.size, p + 1))
        right = np.zeros((x.size, p + 1))
        for j in range(1, p + 1):
            left[:, j] = x - knots[span + 1 - j]
            right[:, j] = knots[span + j] - x
            saved = np.zeros(x.size)
            for r in range(j):
                denom = right[:, r + 1] + left[:, j - r]
                temp = N[:, r] / denom
                N[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            N[:, j] = saved
        return N

    if deriv == 0:
        return span, local_values(degree)
    if deriv > degree:
        return span, np.zeros((x.size, degree + 1))

    # Lower-degree values, then apply the derivative identity `deriv` times.
    N = local_values(degree - deriv)
    for q in range(degree - deriv + 1, degree + 1):
        # N holds degree q-1 functions with global indices span-(q-1) .. span
        out = np.zeros((x.size, q + 1))
        for r in range(q + 1):
            i = span - q + r
            if r >= 1:
                out[:, r] += q * N[:, r - 1] / (knots[i + q] - knots[i])
            if r <= q - 1:
                out[:, r] -= q * N[:, r] / (knots[i + q + 1] - knots[i + 1])
        N = out
    return span, N


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """Clamped B-spline basis on [0, 1] shared by all latent processes."""

    order: int
    interior_knots: np.ndarray
    quadrature: QuadratureRule = field(repr=False)

    def __post_init__(self):
        knots = np.asarray(self.interior_knots, dtype=float)
        if self.order < 1:
            raise InvalidConfigurationError("spline order must be positive")
        if knots.size and (knots.min() <= 0.0 or knots.max() >= 1.0):
            raise InvalidConfigurationError("interior knots must lie strictly inside (0, 1)")
        if np.any(np.diff(knots) <= 0):
            raise InvalidConfigurationError("interior knots must be sorted without duplicates")

    @property
    def n_basis(self) -> int:
        return len(self.interior_knots) + self.order

    @property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], self.interior_knots, [1.0]])

    @cached_property
    def knots(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.order), self.interior_knots,
                               np.ones(self.order)])

    def evaluate(self, t, deriv: int = 0) -> BasisEval:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.size and (np.any(~np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0):
            bad = t[~((t >= 0.0) & (t <= 1.0))][0]
            raise DomainError(f"basis evaluated outside [0, 1] at t={bad!r}")
        span, values = _bspline_local(self.knots, self.order - 1, t, deriv)
        return BasisEval(span - (self.order - 1), values, self.n_basis)

    @cached_property
    def quad_values(self) -> BasisEval:
        return self.evaluate(self.quadrature.nodes, 0)

    @cached_property
    def quad_derivs(self) -> BasisEval:
        return self.evaluate(self.quadrature.nodes, 1)

    @cached_property
    def quad_second_derivs(self) -> BasisEval:
        return self.evaluate(self.quadrature.nodes, 2)

    @cached_property
    def gram(self) -> dict:
        """Banded Gram matrices of values (``vv``), derivatives (``dd``),
        the symmetrised cross term ``vd`` = int(h h'^T + h' h^T), and second
        derivatives (``ss``)."""
        w = self.quadrature.weights
        B, D = self.quad_values, self.quad_derivs
        return {
            "vv": sym_gram_banded(B, B, w),
            "dd": sym_gram_banded(D, D, w),
            "vd": 2.0 * sym_gram_banded(B, D, w),
            "ss": sym_gram_banded(self.quad_second_derivs, self.quad_second_derivs, w),
        }

    def antiderivative(self, t) -> np.ndarray:
        """Dense matrix with rows ``int_0^t h(s) ds``, exact for splines."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.size and (t.min() < 0.0 or t.max() > 1.0):
            raise DomainError("antiderivative requested outside [0, 1]")
        q = self.quadrature
        per_cell = np.zeros((len(self.breakpoints) - 1, self.n_basis))
        Bq = self.quad_values
        cols = Bq.start[:, None] + np.arange(self.order)
        np.add.at(per_cell, (np.repeat(q.cell, self.order), cols.ravel()),
                  (Bq.values * q.weights[:, None]).ravel())
        cumulative = np.vstack([np.zeros(self.n_basis), np.cumsum(per_cell, axis=0)])

        bp = self.breakpoints
        cell = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(bp) - 2)
        gx, gw = np.polynomial.legendre.leggauss(GAUSS_POINTS)
        lo = bp[cell]
        half = 0.5 * (t - lo)
        nodes = lo[:, None] + half[:, None] * (gx + 1.0)
        partial = self.evaluate(nodes.ravel(), 0)
        out = cumulative[cell].copy()
        weights = (half[:, None] * gw).ravel()
        rows = np.repeat(np.arange(t.size), GAUSS_POINTS)
        np.add.at(out, (np.repeat(rows, self.order),
                        (partial.start[:, None] + np.arange(self.order)).ravel()),
                  (partial.values * weights[:, None]).ravel())
        return out


def gauss_legendre_rule(breakpoints: np.ndarray, n_points: int = GAUSS_POINTS) -> QuadratureRule:
    gx, gw = np.polynomial.legendre.leggauss(n_points)
    lo, hi = breakpoints[:-1], breakpoints[1:]
    half = 0.5 * (hi - lo)
    nodes = (lo[:, None] + half[:, None] * (gx + 1.0)).ravel()
    weights = (half[:, None] * gw).ravel()
    cell = np.repeat(np.arange(lo.size), n_points)
    return QuadratureRule(nodes, weights, cell)


def bspline_basis(interior_knots, order: int = 6) -> BasisSystem:
    interior_knots = np.asarray(interior_knots, dtype=float)
    bp = np.concatenate([[0.0], interior_knots, [1.0]])
    return BasisSystem(order, interior_knots, gauss_legendre_rule(bp))


def make_bspline_basis(n_times: int, order: int = 6, interval=(0.0, 1.0)) -> BasisSystem:
    """Equally spaced knots, ``n_times // 2`` of them, for ``n_times`` samples."""
    if tuple(interval) != (0.0, 1.0):
        raise InvalidConfigurationError("bases are built on the rescaled interval [0, 1]")
    if n_times < 2 * order:
        raise InvalidConfigurationError(
            f"need at least {2 * order} time points for order {order}, got {n_times}")
    n_knots = n_times // 2
    interior = np.arange(1, n_knots + 1) / (n_knots + 1)
    return bspline_basis(interior, order)


def eval_basis(basis: BasisSystem, t: float, deriv_order: int = 0) -> np.ndarray:
    if deriv_order not in (0, 1):
        raise ValueError("deriv_order must be 0 or 1")
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t={t!r} outside [0, 1]")
    return basis.evaluate([t], deriv_order).dense()[0]


def integrate(basis: BasisSystem, f: Callable[[np.ndarray], np.ndarray]) -> float:
    q = basis.quadrature
    vals = np.asarray(f(q.nodes), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise NumericError(f"integrand not finite at t={q.nodes[bad][0]!r}")
    return float(vals @ q.weights)
