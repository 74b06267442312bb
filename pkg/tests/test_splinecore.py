from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c1vol.splinecore import (Basis1D, ParameterError, SplineSpaceConfig, TensorCoeffs3,
                              eval_bspline, eval_tensor3, greville, m_function, m_matrix,
                              r_function, r_matrix, space_dims)


def cox_de_boor(t, d, j, x):
    """Plain recursive B-spline definition with half-open intervals."""
    if d == 0:
        if t[j] <= x < t[j + 1]:
            return Fraction(1)
        # the last nonempty interval is closed
        if x == t[-1] and t[j] < t[j + 1] == t[-1]:
            return Fraction(1)
        return Fraction(0)
    out = Fraction(0)
    if t[j + d] != t[j]:
        out += (x - t[j]) / (t[j + d] - t[j]) * cox_de_boor(t, d - 1, j, x)
    if t[j + d + 1] != t[j + 1]:
        out += (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * cox_de_boor(t, d - 1, j + 1, x)
    return out


def admissible():
    return st.integers(3, 7).flatmap(
        lambda p: st.tuples(st.just(p), st.integers(1, p - 2), st.integers(0, 4)))


@pytest.mark.parametrize("prk,dims", [((3, 1, 0), (4, 4, 2)), ((5, 1, 1), (10, 9, 6)),
                                      ((4, 1, 3), (14, 11, 6))])
def test_space_dims_examples(prk, dims):
    assert space_dims(*prk) == dims


def test_space_dims_grid_matches_formulas():
    for p in range(3, 8):
        for r in range(1, p - 1):
            for k in range(5):
                n, n0, n1 = space_dims(p, r, k)
                assert n == p + 1 + k * (p - r)
                assert n0 == p + 1 + k * (p - r - 1)
                assert n1 == p - 1 + k * (p - r - 2)
                assert n1 >= 1
                assert Basis1D(p, r, k).dim == n
                assert Basis1D(p, r + 1, k).dim == n0
                assert Basis1D(p - 2, r, k).dim == n1


@pytest.mark.parametrize("prk", [(2, 1, 0), (3, 2, 0), (3, 0, 0), (4, 1, -1)])
def test_invalid_parameters(prk):
    with pytest.raises(ParameterError):
        space_dims(*prk)


def test_bspline_endpoint_and_index_errors():
    s = SplineSpaceConfig(3, 1, 0)
    assert eval_bspline(s, 0, 0.0) == 1.0
    assert eval_bspline(s, 3, 1.0) == 1.0
    with pytest.raises(IndexError):
        eval_bspline(s, 4, 0.5)


def test_bspline_against_cox_de_boor():
    s = SplineSpaceConfig(3, 1, 1)
    t = s.knots
    assert abs(eval_bspline(s, 2, 0.5) - float(cox_de_boor(t, 3, 2, Fraction(1, 2)))) < 1e-15
    for x in [Fraction(i, 13) for i in range(14)]:
        ref = [float(cox_de_boor(t, 3, j, x)) for j in range(s.n)]
        np.testing.assert_allclose(s.basis.matrix([float(x)])[0], ref, atol=1e-14)
        assert s.basis.exact(x) == [cox_de_boor(t, 3, j, x) for j in range(s.n)]


def test_greville_examples():
    assert greville(SplineSpaceConfig(3, 1, 0)) == tuple(Fraction(i, 3) for i in range(4))
    # knot averages of (0,0,0,0,1/2,1/2,1,1,1,1)
    g = greville(SplineSpaceConfig(3, 1, 1))
    assert g == (0, Fraction(1, 6), Fraction(1, 3), Fraction(2, 3), Fraction(5, 6), 1)


@given(admissible())
@settings(max_examples=30, deadline=None)
def test_greville_increasing_with_unit_ends(prk):
    g = greville(SplineSpaceConfig(*prk))
    assert g[0] == 0 and g[-1] == 1
    assert all(a < b for a, b in zip(g, g[1:]))


@given(admissible(), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_partition_of_unity(prk, seed):
    x = np.random.default_rng(seed).random(1000)
    B = SplineSpaceConfig(*prk).basis
    assert np.abs(B.matrix(x).sum(axis=1) - 1).max() < 1e-13


@given(admissible(), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_derivative_matches_finite_differences(prk, seed):
    s = SplineSpaceConfig(*prk)
    rng = np.random.default_rng(seed)
    x = rng.random(200)
    knots = np.array([float(b) for b in s.basis.breaks])
    x = x[np.min(np.abs(x[:, None] - knots[None, :]), axis=1) > 1e-3]
    step = 1e-6
    fd = (s.basis.matrix(x + step) - s.basis.matrix(x - step)) / (2 * step)
    d = s.basis.matrix(x, 1)
    scale = np.abs(d).max()
    assert np.abs(fd - d).max() <= 1e-6 * max(scale, 1.0)


def test_r_function_endpoints():
    # the three-case telescoping form: -h at the left end, +h at the right end
    s = SplineSpaceConfig(4, 1, 2)
    h = float(s.h)
    assert abs(r_function(s, 0, 0.0, variant="printed") + h) < 1e-14
    assert abs(r_function(s, s.n0 - 1, 1.0, variant="printed") - h) < 1e-14
    # the default form is N'/p of the trace space; both agree for k = 0
    s0 = SplineSpaceConfig(4, 1, 0)
    assert abs(r_function(s0, 0, 0.0) + 1.0) < 1e-14
    assert abs(r_function(s0, s0.n0 - 1, 1.0) - 1.0) < 1e-14
    x = np.linspace(0, 1, 17)
    np.testing.assert_allclose(r_matrix(s, x), s.trace_basis.matrix(x, 1) / s.p, atol=1e-13)
    with pytest.raises(IndexError):
        r_function(s, s.n0, 0.5)


@given(admissible(), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_r_functions_sum_to_zero(prk, seed):
    s = SplineSpaceConfig(*prk)
    x = np.random.default_rng(seed).random(100)
    assert np.abs(r_matrix(s, x).sum(axis=1)).max() < 1e-14


def test_r_variants_agree_without_interior_knots():
    s = SplineSpaceConfig(5, 2, 0)
    x = np.linspace(0, 1, 41)
    np.testing.assert_allclose(r_matrix(s, x, 0, "printed"), r_matrix(s, x), atol=1e-14)


@given(admissible())
@settings(max_examples=30, deadline=None)
def test_m_functions_kronecker_at_zero(prk):
    s = SplineSpaceConfig(*prk)
    vals = m_matrix(s, [0.0], 0)[0]
    ders = m_matrix(s, [0.0], 1)[0]
    assert abs(vals[0] - 1) < 1e-14 and abs(vals[1]) < 1e-14
    assert abs(ders[0]) < 1e-14 and abs(ders[1] - 1) < 1e-14


def test_m1_vanishes_at_one():
    assert m_function(SplineSpaceConfig(3, 1, 0), 1, 1.0) == 0.0


def test_tensor_evaluation():
    s = SplineSpaceConfig(3, 1, 1)
    n = s.n
    ones = TensorCoeffs3(s, np.ones((n, n, n)))
    assert abs(eval_tensor3(ones, (0.3, 0.7, 0.2)) - 1) < 1e-14
    assert abs(eval_tensor3(ones, (0.3, 0.7, 0.2), (1, 0, 0))) < 1e-12
    delta = np.zeros((n, n, n))
    delta[0, 0, 0] = 1
    assert eval_tensor3(TensorCoeffs3(s, delta), (0, 0, 0)) == 1.0
    a = np.random.default_rng(0).standard_normal((n, n, n))
    half = Fraction(1, 2)
    b = [float(cox_de_boor(s.knots, 3, j, half)) for j in range(n)]
    ref = sum(a[i, j, k] * b[i] * b[j] * b[k]
              for i in range(n) for j in range(n) for k in range(n))
    assert abs(eval_tensor3(TensorCoeffs3(s, a), (0.5, 0.5, 0.5)) - ref) < 1e-13
    with pytest.raises(ValueError):
        TensorCoeffs3(s, np.zeros((n, n, n - 1)))
