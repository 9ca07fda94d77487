import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from sparse_ode.basis import (banded_to_dense, bspline_basis, eval_basis, integrate,
                              make_bspline_basis, sym_gram_banded)
from sparse_ode.exceptions import DomainError, InvalidConfigurationError, NumericError


def _scipy_design(basis, t, deriv=0):
    k = basis.order - 1
    m = basis.n_basis
    cols = []
    for i in range(m):
        c = np.zeros(m)
        c[i] = 1.0
        spl = BSpline(basis.knots, c, k, extrapolate=False)
        cols.append(spl(t, nu=deriv) if deriv else spl(t))
    out = np.column_stack(cols)
    return np.nan_to_num(out)


def test_knot_count_follows_sample_size():
    basis = make_bspline_basis(101)
    assert basis.interior_knots.size == 50
    assert basis.n_basis == 56
    assert basis.order == 6


@pytest.mark.parametrize("deriv", [0, 1, 2])
def test_matches_scipy_bspline(deriv):
    basis = make_bspline_basis(30)
    t = np.linspace(0.0, 1.0, 301)[:-1]  # scipy treats the right end as outside
    ours = basis.evaluate(t, deriv).dense()
    ref = _scipy_design(basis, t, deriv)
    assert np.allclose(ours, ref, atol=1e-9 * max(1.0, np.abs(ref).max()))


def test_right_endpoint_is_left_limit():
    basis = make_bspline_basis(24)
    end = basis.evaluate([1.0]).dense()[0]
    near = basis.evaluate([1.0 - 1e-12]).dense()[0]
    assert end[-1] == pytest.approx(1.0)
    assert np.allclose(end, near, atol=1e-9)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
@settings(max_examples=50, deadline=None)
def test_partition_of_unity_and_nonnegativity(ts):
    basis = make_bspline_basis(20)
    E = basis.evaluate(np.array(ts)).dense()
    assert np.all(E >= -1e-14)
    assert np.allclose(E.sum(axis=1), 1.0)
    assert np.allclose(basis.evaluate(np.array(ts), 1).dense().sum(axis=1), 0.0, atol=1e-8)


def test_local_support_has_order_entries():
    basis = make_bspline_basis(40)
    ev = basis.evaluate(np.linspace(0, 1, 57))
    assert ev.values.shape == (57, basis.order)
    assert np.all(ev.start >= 0) and np.all(ev.start + basis.order <= basis.n_basis)


def test_eval_basis_domain_and_order():
    basis = make_bspline_basis(20)
    with pytest.raises(DomainError):
        eval_basis(basis, 1.5)
    with pytest.raises(DomainError):
        basis.evaluate([-0.1])
    with pytest.raises(ValueError):
        eval_basis(basis, 0.5, 2)
    assert eval_basis(basis, 0.3).shape == (basis.n_basis,)


def test_invalid_construction():
    with pytest.raises(InvalidConfigurationError):
        bspline_basis([0.5, 0.2])
    with pytest.raises(InvalidConfigurationError):
        bspline_basis([0.0, 0.5])
    with pytest.raises(InvalidConfigurationError):
        make_bspline_basis(5)


@pytest.mark.parametrize("degree", range(14))
def test_gauss_rule_exact_for_polynomials(degree):
    basis = make_bspline_basis(20)
    assert integrate(basis, lambda t: t ** degree) == pytest.approx(1.0 / (degree + 1), rel=1e-13)


def test_integrate_rejects_nonfinite():
    basis = make_bspline_basis(20)
    with pytest.raises(NumericError):
        integrate(basis, lambda t: np.where(t > 0.5, np.inf, t))


def test_banded_gram_matches_dense(rng):
    basis = make_bspline_basis(30)
    q = basis.quadrature
    w = rng.uniform(0.5, 2.0, q.nodes.size)
    for left, right in [(basis.quad_values, basis.quad_values),
                        (basis.quad_derivs, basis.quad_derivs)]:
        dense = left.dense().T @ (w[:, None] * right.dense())
        assert np.allclose(banded_to_dense(sym_gram_banded(left, right, w)), dense,
                           atol=1e-12 * np.abs(dense).max())
    B, D = basis.quad_values.dense(), basis.quad_derivs.dense()
    vd = B.T @ (q.weights[:, None] * D)
    assert np.allclose(banded_to_dense(basis.gram["vd"]), vd + vd.T, atol=1e-10)


def test_antiderivative_against_trapezoid(rng):
    basis = make_bspline_basis(30)
    c = rng.normal(size=basis.n_basis)
    t = np.array([0.0, 0.13, 0.5, 0.77, 1.0])
    fine = np.linspace(0.0, 1.0, 100_001)
    f = basis.evaluate(fine) @ c
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(fine))])
    ref = np.interp(t, fine, cum)
    assert np.allclose(basis.antiderivative(t) @ c, ref, atol=1e-9)
