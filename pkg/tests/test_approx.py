import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c1vol.approx import (IllConditionedError, MassOperator, QuadratureRule, builtin_target,
                          convergence_study, error_on_region, gram_matrix, l2_fit,
                          solve_normal_equations)
from c1vol.c1space import build_space


@pytest.fixture(scope="module")
def basis(threepatch):
    return build_space(threepatch, 4, 1, 1)


@pytest.fixture(scope="module")
def mass(basis):
    return MassOperator(basis.volume, basis.space)


@given(st.integers(1, 6), st.integers(1, 4), st.data())
@settings(max_examples=30, deadline=None)
def test_gauss_rule_exactness(q, elements, data):
    deg = data.draw(st.integers(0, 2 * q - 1))
    rule = QuadratureRule.make(q, elements)
    assert abs(rule.weights @ rule.nodes ** deg - 1 / (deg + 1)) < 1e-13


def test_quadrature_reproduces_patch_volumes(threepatch, mass):
    exact = [float(threepatch.patch_volume(i)) for i in range(threepatch.num_patches)]
    np.testing.assert_allclose(mass.patch_volumes(), exact, rtol=1e-12)


def test_builtin_targets():
    x = np.array([[0.2, 0.4, 0.6]])
    f = builtin_target("builtin:cos-sin-cos")
    assert abs(f(x)[0] - 5 * np.cos(0.1) * np.sin(0.2) * np.cos(0.3)) < 1e-15
    assert builtin_target("constant:2.5")(x)[0] == 2.5
    assert builtin_target("coordinate:1")(x)[0] == 0.4
    with pytest.raises(ValueError):
        builtin_target("bogus")


def test_constants_are_reproduced(basis, mass):
    for method in ("dense", "pcg"):
        fit = l2_fit(basis, "constant:1", method=method, mass=mass)
        assert fit.e_volume <= 1e-10, method
        assert fit.e_faces <= 1e-10 and fit.e_edge <= 1e-10


def test_coordinates_are_members(basis, mass):
    for a in range(3):
        fit = l2_fit(basis, f"coordinate:{a}", mass=mass)
        assert max(fit.e_volume, fit.e_faces, fit.e_edge) <= 1e-9


def test_dense_and_iterative_solvers_agree(basis, mass):
    dense = l2_fit(basis, "cos-sin-cos", method="dense", mass=mass)
    it = l2_fit(basis, "cos-sin-cos", method="pcg", mass=mass)
    assert it.iterations > 0
    assert abs(dense.e_volume - it.e_volume) <= 1e-8 * dense.e_volume
    np.testing.assert_allclose(it.coeffs, dense.coeffs, atol=1e-7 * np.abs(dense.coeffs).max())


def test_galerkin_orthogonality(basis, mass):
    f = builtin_target("cos-sin-cos")
    fit = l2_fit(basis, f, mass=mass)
    Phi = basis.matrix.tocsr()
    resid = Phi.T @ (mass.load_vector(f) - mass.apply(Phi @ fit.coeffs))
    znorm = np.sqrt(mass.integrate(lambda x: f(x) ** 2))
    idx = np.random.default_rng(0).choice(basis.dim, 20, replace=False)
    cols = Phi[:, idx].toarray()
    norms = np.sqrt(np.einsum("ij,ij->j", cols, mass.apply(cols)))
    assert np.all(np.abs(resid[idx]) <= 1e-9 * znorm * norms)


def test_fit_is_a_projection(basis, mass):
    fit = l2_fit(basis, "cos-sin-cos", mass=mass)
    g = basis.coefficients(fit.coeffs)
    values = mass.values(g)

    # refit the fitted function, given through its values at the quadrature points
    cache = {id(P): i for i, P in enumerate(mass.points)}

    def zh(x):
        i = cache[id(x)]
        return values[i].ravel()

    Phi = basis.matrix.tocsr()
    b = Phi.T @ mass.load_vector(zh)
    c2, *_ = solve_normal_equations(basis, b, mass)
    assert np.abs(c2 - fit.coeffs).max() <= 1e-10 * max(1.0, np.abs(fit.coeffs).max())


def test_gram_matrix_is_symmetric_positive(basis, mass):
    G = gram_matrix(basis, mass=mass)
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0


def test_singular_gram_is_reported(basis, mass):
    import copy
    import scipy.sparse as sp
    dup = copy.copy(basis)
    dup.matrix = sp.hstack([basis.matrix[:, :5], basis.matrix[:, :1]], format="csc")
    dup.families = {"patch": (0, 6)}
    with pytest.raises(IllConditionedError):
        l2_fit(dup, "constant:1", method="dense", mass=mass)


def test_region_errors(basis, mass):
    c = np.zeros(basis.dim)
    assert abs(error_on_region(basis, c, "constant:1", "volume", mass=mass) - 1) < 1e-12
    assert abs(error_on_region(basis, c, "constant:1", "inner-edge") - 1) < 1e-12
    with pytest.raises(ValueError):
        error_on_region(basis, c, "constant:0", "volume", mass=mass)
    with pytest.raises(ValueError):
        error_on_region(basis, c, "constant:1", "nowhere")


def test_errors_do_not_increase_under_refinement(threepatch):
    rows = convergence_study(threepatch, [3, 4], 1, [0, 1])
    for p in (3, 4):
        e = [row["e_volume"] for row in rows if row["p"] == p]
        assert e[1] <= e[0] * 1.01
    assert all("note" not in row for row in rows)
    capped = convergence_study(threepatch, [3], 1, [2], max_dim=100)
    assert capped[0]["dim_total"] == 2020 and "note" in capped[0]
